#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tempora/config.hpp"
#include "tempora/errors.hpp"
#include "tempora/harness.hpp"
#include "tempora/prop1.hpp"

namespace {

using namespace tempora;

constexpr double kProp1Tolerance = 1e-9;

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const unsigned long v = std::stoul(item, &used);
    if (used != item.size() || v == 0) throw ContractError("--dims expects positive integers, got '" + item + "'");
    dims.push_back(v);
  }
  if (dims.empty()) throw ContractError("--dims is empty");
  return dims;
}

LinkPredictor rebuild(const Checkpoint& ckpt) {
  Rng rng(0);
  LinkPredictor model(ckpt.experiment.model, rng);
  restore_checkpoint(model, ckpt);
  return model;
}

int cmd_synth(const std::string& config) {
  const auto cfg = load_synth_config(config);
  const auto result = run_synth_experiment(cfg);
  write_synth_outputs(cfg, result);
  std::printf("runs %zu  mean test accuracy %.4f\n", result.runs.size(), result.mean_test_accuracy);
  if (result.attention) {
    std::printf("attention rank correlation %.4f\n",
                spearman_correlation(result.attention->learned, result.attention->truth));
  }
  std::printf("outputs in %s\n", cfg.output_dir.string().c_str());
  return 0;
}

int cmd_link_train(const std::string& config) {
  const auto cfg = load_experiment_config(config);
  const auto graph = load_dataset(cfg.dataset);
  std::vector<RunResult> results;
  for (auto seed : cfg.seeds) {
    const auto run = train_link_model(cfg, graph, seed);
    write_run_outputs(run, cfg.output_dir / ("seed_" + std::to_string(seed)));
    std::printf("seed %llu  epochs %zu  test AP random %.2f  historical %.2f\n",
                static_cast<unsigned long long>(seed), run.result.epochs.size(), run.result.test_ap_random,
                run.result.test_ap_hist);
    results.push_back(run.result);
  }
  write_results_csv(results, cfg.output_dir / "result.csv");
  return 0;
}

int cmd_link_eval(const std::string& checkpoint, const std::string& ns, const std::string& split_name) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto graph = load_dataset(ckpt.experiment.dataset);
  const auto model = rebuild(ckpt);
  const auto ranges = split_ranges(graph, ckpt.split);
  std::size_t begin = ranges.val_end, end = graph.num_edges();
  if (split_name == "val") {
    begin = ranges.train_end;
    end = ranges.val_end;
  } else if (split_name != "test") {
    throw ContractError("--split must be val or test");
  }
  const auto strategy = parse_ns_strategy(ns);
  const auto r = evaluate_link_model(model, graph, begin, end, strategy, ckpt.experiment.batch_size,
                                     derive_seed(ckpt.seed, split_name == "val" ? 3 : 4));
  std::printf("%s AP %.4f  AUC %.4f  batches %zu  fallback negatives %zu\n", std::string(to_string(strategy)).c_str(),
              r.ap, r.auc, r.batches, r.fallback_negatives);
  return 0;
}

int cmd_attn_export(const std::string& checkpoint, std::size_t k, const std::string& out, std::uint64_t seed) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto graph = load_dataset(ckpt.experiment.dataset);
  const auto model = rebuild(ckpt);
  const auto sample = sample_test_edges(graph, ckpt.split, k, seed);
  const auto records = export_attention_records(model, graph, sample);
  const auto path = std::filesystem::path(out) / "attention_records.csv";
  write_attention_records(records, path);
  std::printf("%zu records from %zu edges -> %s\n", records.size(), sample.size(), path.string().c_str());
  return 0;
}

int cmd_params(const std::string& config) {
  const auto cfg = load_experiment_config(config);
  ModelConfig model = cfg.model;
  if (!cfg.dataset.path.empty() || cfg.dataset.toy) model = resolve_model_config(model, load_dataset(cfg.dataset));
  Rng rng(0);
  const auto count = count_parameters(LinkPredictor(model, rng));
  std::printf("total %zu\n", count.total);
  for (const auto& [group, n] : count.by_group) std::printf("  %-13s %zu\n", std::string(to_string(group)).c_str(), n);
  return 0;
}

int cmd_prop1(std::size_t instances, std::uint64_t seed) {
  const auto sweep = run_prop1_sweep(instances, seed);
  const bool pass = sweep.max_residual < kProp1Tolerance;
  std::printf("instances %zu  max residual %.3e  %s\n", sweep.instances, sweep.max_residual, pass ? "PASS" : "FAIL");
  return pass ? 0 : 1;
}

int cmd_sweep(const std::string& config, const std::string& dims_text, bool count_only) {
  const auto cfg = load_experiment_config(config);
  const auto graph = load_dataset(cfg.dataset);
  const auto dims = parse_dims(dims_text);
  const auto rows = dimension_sweep(cfg, graph, dims, !count_only);
  write_sweep_csv(rows, cfg.output_dir / "sweep.csv");
  std::printf("%8s %14s %12s %12s\n", "dim", "params", "AP random", "AP hist");
  for (const auto& r : rows) {
    std::printf("%8zu %14zu %12.2f %12.2f\n", r.dim, r.parameter_count, r.test_ap_random, r.test_ap_hist);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal graph learning with linear and sinusoidal time encoders"};
  app.require_subcommand(1);

  std::string config, checkpoint, ns = "random", split = "test", out = ".", dims;
  std::size_t k = 100, instances = 1000;
  std::uint64_t seed = 0;
  bool count_only = false;

  auto* synth = app.add_subcommand("synth", "Synthetic event-sequence benchmark");
  synth->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("link-train", "Train a link predictor");
  train->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("link-eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--ns", ns, "Negative sampling strategy")->check(CLI::IsMember({"random", "historical"}));
  eval->add_option("--split", split, "Evaluation split")->check(CLI::IsMember({"val", "test"}));

  auto* attn = app.add_subcommand("attn-export", "Export last-layer attention records");
  attn->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  attn->add_option("--k", k, "Number of test edges to sample")->required();
  attn->add_option("--out", out, "Output directory")->required();
  attn->add_option("--seed", seed, "Sampling seed");

  auto* params = app.add_subcommand("params", "Count model parameters");
  params->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);

  auto* prop1 = app.add_subcommand("prop1-check", "Verify the time-span factorization construction");
  prop1->add_option("--instances", instances, "Random instances");
  prop1->add_option("--seed", seed, "Seed");

  auto* sweep = app.add_subcommand("sweep", "Retrain across time-encoding widths");
  sweep->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  sweep->add_option("--dims", dims, "Comma-separated widths")->required();
  sweep->add_flag("--count-only", count_only, "Count parameters without training");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(config);
    if (*train) return cmd_link_train(config);
    if (*eval) return cmd_link_eval(checkpoint, ns, split);
    if (*attn) return cmd_attn_export(checkpoint, k, out, seed);
    if (*params) return cmd_params(config);
    if (*prop1) return cmd_prop1(instances, seed);
    if (*sweep) return cmd_sweep(config, dims, count_only);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
