#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

#include "tempora/config.hpp"
#include "tempora/errors.hpp"
#include "tempora/harness.hpp"
#include "tempora/optim.hpp"

namespace tempora {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  static int counter = 0;
  auto p = fs::temp_directory_path() /
           ("tempora_harness_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + name);
  fs::create_directories(p);
  return p;
}

TemporalGraph toy(std::size_t nodes, std::size_t edges, std::uint64_t seed, std::size_t de = 2) {
  ToyGraphConfig t;
  t.nodes = nodes;
  t.edges = edges;
  t.edge_feature_dim = de;
  t.seed = seed;
  return generate_toy_graph(t);
}

ExperimentConfig tiny_experiment(Architecture arch, EncoderFamily family = EncoderFamily::linear) {
  ExperimentConfig cfg;
  auto& m = cfg.model;
  m.architecture = arch;
  m.layers = 1;
  m.dropout = 0.0;
  m.time_encoder = {family, 3};
  m.neighbors = 4;
  m.embed_dim = 6;
  m.mlp_dim = 6;
  m.channel_dim = 3;
  m.time_channel_dim = 2;
  m.cooccurrence_dim = 3;
  m.max_sequence_length = 5;
  m.out_dim = 4;
  cfg.batch_size = 20;
  cfg.lr = 1e-3;
  cfg.epochs = 3;
  cfg.patience = 5;
  cfg.seeds = {0};
  return cfg;
}

class SeedEnv {
 public:
  explicit SeedEnv(const char* value) { ::setenv("TEMPORA_SEED", value, 1); }
  ~SeedEnv() { ::unsetenv("TEMPORA_SEED"); }
};

TEST(ExperimentConfig, ParsesNestedSections) {
  ::unsetenv("TEMPORA_SEED");
  auto cfg = parse_experiment_config(R"({
    "dataset": {"toy": {"nodes": 12, "edges": 80}, "split": "duration"},
    "model": {"architecture": "dygdecoder", "channel_dim": 8, "patch_size": 2},
    "time_encoder": {"family": "sinusoidal_pair", "d_T": 6},
    "train": {"batch_size": 50, "lr": 0.01, "epochs": 7, "patience": 3},
    "eval": {"negative_sampling": "historical"},
    "seeds": [3, 4]
  })");
  ASSERT_TRUE(cfg.dataset.toy.has_value());
  EXPECT_EQ(cfg.dataset.toy->nodes, 12u);
  EXPECT_EQ(cfg.dataset.split, SplitMode::duration);
  EXPECT_EQ(cfg.model.architecture, Architecture::dygdecoder);
  EXPECT_EQ(cfg.model.channel_dim, 8u);
  EXPECT_EQ(cfg.model.time_encoder.family, EncoderFamily::sinusoidal_pair);
  EXPECT_EQ(cfg.model.time_encoder.dim, 6u);
  EXPECT_EQ(cfg.batch_size, 50u);
  EXPECT_EQ(cfg.lr, 0.01);
  EXPECT_EQ(cfg.eval_ns, NsStrategy::historical);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{3, 4}));
  auto back = parse_experiment_config(experiment_config_to_json(cfg));
  EXPECT_EQ(experiment_config_to_json(back), experiment_config_to_json(cfg));
}

TEST(ExperimentConfig, RejectsUnknownKeys) {
  EXPECT_THROW(parse_experiment_config(R"({"modle": {}})"), ContractError);
  EXPECT_THROW(parse_experiment_config(R"({"model": {"heads": 2}})"), ContractError);
  EXPECT_THROW(parse_experiment_config(R"({"time_encoder": {"family": "fourier"}})"), ContractError);
  EXPECT_THROW(parse_experiment_config(R"({"train": {"lr": -1}})"), ContractError);
}

TEST(ExperimentConfig, SeedFromEnvironmentOverridesList) {
  {
    SeedEnv env("17");
    EXPECT_EQ(parse_experiment_config(R"({"seeds": [1, 2]})").seeds, (std::vector<std::uint64_t>{17}));
    EXPECT_EQ(parse_experiment_config(R"({"seeds": [1, 2]})", false).seeds, (std::vector<std::uint64_t>{1, 2}));
  }
  {
    SeedEnv env("abc");
    EXPECT_THROW(seed_from_environment(), ContractError);
  }
  EXPECT_FALSE(seed_from_environment().has_value());
}

TEST(ToyGraph, DeterministicAndChronological) {
  auto a = toy(20, 300, 5), b = toy(20, 300, 5);
  EXPECT_EQ(a.edges(), b.edges());
  for (std::size_t e = 1; e < a.num_edges(); ++e) EXPECT_LE(a.edge(e - 1).time, a.edge(e).time);
  EXPECT_EQ(a.edge_feature_dim(), 2u);
}

TEST(Training, SmokeRunProducesBoundedMetrics) {
  const auto g = toy(15, 200, 1);
  for (auto arch : {Architecture::tgat, Architecture::dygformer, Architecture::dygformer_separate,
                    Architecture::dygdecoder}) {
    auto run = train_link_model(tiny_experiment(arch), g, 0);
    ASSERT_FALSE(run.result.epochs.empty());
    for (const auto& e : run.result.epochs) {
      EXPECT_TRUE(std::isfinite(e.loss));
      EXPECT_GE(e.val_ap_random, 0.0);
      EXPECT_LE(e.val_ap_random, 100.0);
      EXPECT_GE(e.val_ap_hist, 0.0);
      EXPECT_LE(e.val_ap_hist, 100.0);
    }
    for (double v : {run.result.test_ap_random, run.result.test_ap_hist, run.result.test_auc_random,
                     run.result.test_auc_hist}) {
      EXPECT_GT(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
    EXPECT_GE(run.result.best_epoch_random, 1u);
  }
}

TEST(Training, DeterministicForSeed) {
  const auto g = toy(15, 200, 2);
  auto cfg = tiny_experiment(Architecture::tgat, EncoderFamily::sinusoidal_cos);
  cfg.model.dropout = 0.2;
  auto a = train_link_model(cfg, g, 4), b = train_link_model(cfg, g, 4);
  ASSERT_EQ(a.result.epochs.size(), b.result.epochs.size());
  for (std::size_t i = 0; i < a.result.epochs.size(); ++i) EXPECT_EQ(a.result.epochs[i].loss, b.result.epochs[i].loss);
  EXPECT_EQ(a.result.test_ap_hist, b.result.test_ap_hist);
  EXPECT_NE(train_link_model(cfg, g, 5).result.epochs[0].loss, a.result.epochs[0].loss);
}

TEST(Training, FirstEpochLossMatchesHandAssembledBatch) {
  TemporalGraph g(4, {{0, 1, 1.0}, {2, 3, 2.0}, {0, 3, 3.0}, {1, 2, 4.0}, {0, 2, 5.0}, {1, 3, 6.0}});
  auto cfg = tiny_experiment(Architecture::tgat);
  cfg.epochs = 1;
  cfg.batch_size = 2;
  const SplitBoundaries split{2.5, 4.5};
  auto run = train_link_model(cfg, g, 3, {split, false});

  Rng init(derive_seed(3, 0));
  LinkPredictor model(resolve_model_config(cfg.model, g), init);
  model.embedder().time_encoder().set_standardizer(fit_link_standardizer(g, 2, model.config()));
  Rng negatives(derive_seed(3, 2));
  std::vector<EdgeEvent> batch(g.edges().begin(), g.edges().begin() + 2);
  auto neg = sample_random_negatives(batch, 4, negatives, 0);
  batch.insert(batch.end(), neg.edges.begin(), neg.edges.end());
  const std::vector<double> labels{1.0, 1.0, 0.0, 0.0};
  const double want = bce_with_logits(model.logits(batch, g, ForwardContext{}), labels).item();
  ASSERT_EQ(run.result.epochs.size(), 1u);
  EXPECT_DOUBLE_EQ(run.result.epochs[0].loss, want);
}

TEST(Training, LinkStandardizerUsesTrainingNeighborGaps) {
  TemporalGraph g(3, {{0, 1, 1.0}, {0, 2, 3.0}, {1, 2, 7.0}, {0, 1, 100.0}});
  auto cfg = tiny_experiment(Architecture::tgat);
  auto s = fit_link_standardizer(g, 3, resolve_model_config(cfg.model, g));
  // gaps: edge 1 -> node 0 saw t=1 (2); edge 2 -> node 1 saw t=1 (6), node 2 saw t=3 (4)
  EXPECT_DOUBLE_EQ(s.mean, 4.0);
  EXPECT_NEAR(s.stddev, std::sqrt(8.0 / 3.0), 1e-12);
}

TEST(Training, ValidationIgnoresTestEdges) {
  const auto g = toy(15, 200, 6);
  const auto split = chronological_split(g);
  const auto ranges = split_ranges(g, split);
  std::vector<EdgeEvent> changed(g.edges().begin(), g.edges().end());
  for (std::size_t e = ranges.val_end; e < changed.size(); ++e) changed[e].dst = (changed[e].dst + 7) % 15;
  FeatureTable ef{g.edge_feature_dim(), {}};
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    auto f = g.edge_feature(e);
    ef.values.insert(ef.values.end(), f.begin(), f.end());
  }
  TemporalGraph canary(15, changed, ef);
  for (auto arch : {Architecture::tgat, Architecture::dygformer_separate}) {
    auto cfg = tiny_experiment(arch);
    auto a = train_link_model(cfg, g, 1, {split, false});
    auto b = train_link_model(cfg, canary, 1, {split, false});
    ASSERT_EQ(a.result.epochs.size(), b.result.epochs.size());
    for (std::size_t i = 0; i < a.result.epochs.size(); ++i) {
      EXPECT_EQ(a.result.epochs[i].loss, b.result.epochs[i].loss);
      EXPECT_EQ(a.result.epochs[i].val_ap_random, b.result.epochs[i].val_ap_random);
      EXPECT_EQ(a.result.epochs[i].val_ap_hist, b.result.epochs[i].val_ap_hist);
    }
  }
}

TEST(Training, NonFiniteLossIsReported) {
  const auto g = toy(15, 200, 7);
  std::vector<double> feats;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    auto f = g.edge_feature(e);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  feats[2 * 30] = std::numeric_limits<double>::quiet_NaN();
  TemporalGraph poisoned(g.num_nodes(), g.edges(), FeatureTable{2, feats});
  EXPECT_THROW(train_link_model(tiny_experiment(Architecture::tgat), poisoned, 0), TrainingError);
}

TEST(Evaluation, RejectsEmptyRangesAndReusesNegatives) {
  const auto g = toy(15, 200, 8);
  Rng rng(1);
  LinkPredictor model(resolve_model_config(tiny_experiment(Architecture::tgat).model, g), rng);
  model.embedder().time_encoder().set_standardizer({1.0, 1.0});
  EXPECT_THROW(evaluate_link_model(model, g, 10, 10, NsStrategy::random, 20, 0), ContractError);
  EXPECT_THROW(evaluate_link_model(model, g, 0, 10, NsStrategy::random, 0, 0), ContractError);
  auto a = evaluate_link_model(model, g, 100, 200, NsStrategy::historical, 20, 9);
  auto b = evaluate_link_model(model, g, 100, 200, NsStrategy::historical, 20, 9);
  EXPECT_EQ(a.ap, b.ap);
  EXPECT_EQ(a.batches, 5u);
}

TEST(Checkpoint, RoundTripRestoresLogits) {
  const auto g = toy(15, 200, 9);
  const auto dir = scratch("ckpt");
  for (auto arch : {Architecture::tgat, Architecture::dygdecoder}) {
    auto cfg = tiny_experiment(arch, EncoderFamily::sinusoidal_scale);
    cfg.epochs = 2;
    auto run = train_link_model(cfg, g, 2);
    write_run_outputs(run, dir);
    auto ckpt = load_checkpoint(dir / "checkpoint_historical.json");
    EXPECT_EQ(ckpt.seed, 2u);
    EXPECT_EQ(ckpt.selected_by, NsStrategy::historical);
    EXPECT_EQ(ckpt.epoch, run.best_hist.epoch);
    EXPECT_EQ(ckpt.split.t_val, run.best_hist.split.t_val);

    Rng r1(100), r2(200);
    LinkPredictor from_run(ckpt.experiment.model, r1), from_file(ckpt.experiment.model, r2);
    restore_checkpoint(from_run, run.best_hist);
    restore_checkpoint(from_file, ckpt);
    std::span<const EdgeEvent> probe(g.edges().data() + 150, 30);
    auto la = from_run.logits(probe, g, ForwardContext{}), lb = from_file.logits(probe, g, ForwardContext{});
    EXPECT_EQ(la.to_vector(), lb.to_vector());
    EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "result.csv"));
  }
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsMismatchedModel) {
  const auto g = toy(15, 200, 10);
  Rng rng(1);
  auto small = resolve_model_config(tiny_experiment(Architecture::tgat).model, g);
  auto wide = small;
  wide.embed_dim = 8;
  LinkPredictor a(small, rng), b(wide, rng);
  EXPECT_THROW(restore_checkpoint(b, capture_checkpoint(a)), ContractError);
  const auto dir = scratch("bad");
  std::ofstream(dir / "x.json") << R"({"format": "other"})";
  EXPECT_THROW(load_checkpoint(dir / "x.json"), ContractError);
  fs::remove_all(dir);
}

TEST(AttentionExport, RecordCountAndCausality) {
  const auto g = toy(15, 200, 11);
  const auto split = chronological_split(g);
  const auto sample = sample_test_edges(g, split, 12, 3);
  ASSERT_EQ(sample.size(), 12u);
  for (std::size_t i = 1; i < sample.size(); ++i) EXPECT_LE(sample[i - 1].time, sample[i].time);
  for (auto arch : {Architecture::dygformer_separate, Architecture::dygdecoder}) {
    Rng rng(4);
    LinkPredictor model(resolve_model_config(tiny_experiment(arch).model, g), rng);
    model.embedder().time_encoder().set_standardizer({2.0, 3.0});
    AttentionCapture capture;
    model.logits(sample, g, ForwardContext{}, &capture);
    ASSERT_EQ(capture.sequences.size(), 2 * sample.size());
    std::size_t expected = 0;
    for (const auto& s : capture.sequences) {
      const std::size_t n = s.position_times.size() - (s.has_bos ? 1 : 0);
      expected += arch == Architecture::dygdecoder ? n * (n + 1) / 2 : n * n;
    }
    const auto records = export_attention_records(model, g, sample);
    EXPECT_EQ(records.size(), expected);
    for (const auto& r : records) {
      EXPECT_GE(r.score, 0.0);
      EXPECT_LE(r.score, 1.0);
      EXPECT_GE(r.t_minus_tq, 0.0);
      if (arch == Architecture::dygdecoder) EXPECT_GE(r.t_minus_tk, r.t_minus_tq);
    }
  }
  Rng rng(5);
  LinkPredictor joint(resolve_model_config(tiny_experiment(Architecture::dygformer).model, g), rng);
  EXPECT_THROW(export_attention_records(joint, g, sample), ContractError);
  EXPECT_EQ(sample_test_edges(g, split, 100000, 3).size(), g.num_edges() - split_ranges(g, split).val_end);
}

TEST(DimensionSweep, ParameterCountsShrinkWithDimension) {
  const auto g = toy(15, 200, 12);
  const std::size_t dims[] = {100, 50, 10, 2};
  for (auto arch : {Architecture::tgat, Architecture::dygformer_separate}) {
    auto cfg = tiny_experiment(arch, EncoderFamily::sinusoidal_cos);
    auto rows = dimension_sweep(cfg, g, dims, false);
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].dim, dims[i]);
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].parameter_count, rows[i - 1].parameter_count);
  }
}

TEST(SynthExperiment, WritesOutputs) {
  SynthExperimentConfig cfg;
  cfg.data.sequences = 200;
  cfg.model.mode = AttentionMode::autoregressive;
  cfg.train.epochs = 2;
  cfg.runs = 2;
  cfg.output_dir = scratch("synth");
  auto r = run_synth_experiment(cfg);
  ASSERT_EQ(r.runs.size(), 2u);
  EXPECT_NEAR(r.mean_test_accuracy, (r.runs[0].test_accuracy + r.runs[1].test_accuracy) / 2.0, 1e-12);
  ASSERT_TRUE(r.attention.has_value());
  EXPECT_EQ(r.attention->learned.size(), 7u);
  write_synth_outputs(cfg, r);
  EXPECT_TRUE(fs::exists(cfg.output_dir / "synth_result.csv"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "attention_profile.csv"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "sequences.csv"));
  fs::remove_all(cfg.output_dir);
}

}  // namespace
}  // namespace tempora
