#include "tempora/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tempora/errors.hpp"
#include "tempora/metrics.hpp"
#include "tempora/optim.hpp"

namespace tempora {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "tempora-checkpoint";
constexpr int kCheckpointVersion = 1;

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << std::setprecision(17);
  return out;
}

std::size_t history_budget(const ModelConfig& m) {
  return m.architecture == Architecture::tgat ? m.neighbors : m.max_sequence_length - 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint capture_checkpoint(const LinkPredictor& model) {
  Checkpoint ckpt;
  ckpt.experiment.model = model.config();
  ckpt.standardizer = model.embedder().time_encoder().standardizer();
  const auto params = model.parameters();
  for (const auto& p : params.entries()) ckpt.parameters.emplace_back(p.name, p.tensor.to_vector());
  return ckpt;
}

void restore_checkpoint(LinkPredictor& model, const Checkpoint& ckpt) {
  const auto params = model.parameters();
  const auto& entries = params.entries();
  if (entries.size() != ckpt.parameters.size()) throw ContractError("checkpoint parameter count differs from the model");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, values] = ckpt.parameters[i];
    if (entries[i].name != name) throw ContractError("checkpoint parameter '" + name + "' does not match '" + entries[i].name + "'");
    Tensor t = entries[i].tensor;
    auto dst = t.mutable_data();
    if (dst.size() != values.size()) throw ContractError("checkpoint parameter '" + name + "' has the wrong size");
    std::copy(values.begin(), values.end(), dst.begin());
  }
  if (ckpt.standardizer) model.embedder().time_encoder().set_standardizer(*ckpt.standardizer);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json root;
  root["format"] = kCheckpointFormat;
  root["version"] = kCheckpointVersion;
  root["experiment"] = json::parse(experiment_config_to_json(ckpt.experiment));
  root["seed"] = ckpt.seed;
  root["selected_by"] = std::string(to_string(ckpt.selected_by));
  root["epoch"] = ckpt.epoch;
  root["split"] = {{"t_val", ckpt.split.t_val}, {"t_test", ckpt.split.t_test}};
  if (ckpt.standardizer) {
    root["standardizer"] = {{"mean", ckpt.standardizer->mean}, {"stddev", ckpt.standardizer->stddev}};
  } else {
    root["standardizer"] = nullptr;
  }
  json params = json::array();
  for (const auto& [name, values] : ckpt.parameters) params.push_back({{"name", name}, {"values", values}});
  root["parameters"] = std::move(params);
  auto out = open_output(path);
  out << root.dump();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0);
  }
  if (root.value("format", "") != kCheckpointFormat || root.value("version", 0) != kCheckpointVersion) {
    throw ContractError(path.string() + " is not a supported checkpoint");
  }
  Checkpoint ckpt;
  ckpt.seed = root["seed"].get<std::uint64_t>();
  ckpt.experiment = parse_experiment_config(root["experiment"].dump(), false);
  ckpt.selected_by = parse_ns_strategy(root["selected_by"].get<std::string>());
  ckpt.epoch = root["epoch"].get<std::size_t>();
  ckpt.split = {root["split"]["t_val"].get<double>(), root["split"]["t_test"].get<double>()};
  if (!root["standardizer"].is_null()) {
    ckpt.standardizer = Standardizer{root["standardizer"]["mean"].get<double>(),
                                     root["standardizer"]["stddev"].get<double>()};
  }
  for (const auto& p : root["parameters"]) {
    ckpt.parameters.emplace_back(p["name"].get<std::string>(), p["values"].get<std::vector<double>>());
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Training and evaluation

ModelConfig resolve_model_config(ModelConfig model, const TemporalGraph& graph) {
  model.node_feature_dim = graph.node_feature_dim();
  model.edge_feature_dim = graph.edge_feature_dim();
  return model;
}

Standardizer fit_link_standardizer(const TemporalGraph& graph, std::size_t train_end, const ModelConfig& model) {
  const std::size_t budget = history_budget(model);
  std::vector<double> diffs;
  for (std::size_t e = 0; e < train_end; ++e) {
    const auto& edge = graph.edge(e);
    for (NodeId u : {edge.src, edge.dst}) {
      for (const auto& nb : graph.recent_neighbors(u, edge.time, budget)) diffs.push_back(edge.time - nb.time);
    }
  }
  if (diffs.empty()) return {};
  return fit_time_standardizer(diffs);
}

EvalResult evaluate_link_model(const LinkPredictor& model, const TemporalGraph& graph, std::size_t begin,
                               std::size_t end, NsStrategy strategy, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  if (begin >= end) throw ContractError("evaluation range is empty");
  EvalResult result;
  HistoryTracker tracker(graph);
  const ForwardContext ctx;
  std::vector<EdgeEvent> batch;
  std::vector<int> labels;
  double ap_sum = 0.0, auc_sum = 0.0;
  for (std::size_t from = begin, b = 0; from < end; from += batch_size, ++b) {
    const std::size_t to = std::min(end, from + batch_size);
    std::span<const EdgeEvent> positives(graph.edges().data() + from, to - from);
    Rng rng(derive_seed(seed, b));
    NegativeBatch negatives;
    if (strategy == NsStrategy::random) {
      negatives = sample_random_negatives(positives, graph.num_nodes(), rng, b);
    } else {
      const auto& history = tracker.advance_to(positives.front().time);
      negatives = sample_historical_negatives(positives, history, graph.num_nodes(), rng, {}, b);
    }
    result.fallback_negatives += negatives.fallback_count();
    batch.assign(positives.begin(), positives.end());
    batch.insert(batch.end(), negatives.edges.begin(), negatives.edges.end());
    labels.assign(positives.size(), 1);
    labels.resize(batch.size(), 0);
    Tensor logits = model.logits(batch, graph, ctx);
    const auto scores = logits.data();
    ap_sum += average_precision(scores, labels);
    auc_sum += roc_auc(scores, labels);
    ++result.batches;
  }
  result.ap = ap_sum / static_cast<double>(result.batches);
  result.auc = auc_sum / static_cast<double>(result.batches);
  return result;
}

TrainedRun train_link_model(const ExperimentConfig& cfg, const TemporalGraph& graph, std::uint64_t seed,
                            const TrainOverrides& overrides) {
  cfg.validate();
  const ModelConfig mc = resolve_model_config(cfg.model, graph);
  const SplitBoundaries split =
      overrides.split ? *overrides.split : chronological_split(graph, 0.70, 0.85, cfg.dataset.split);
  const SplitRanges ranges = split_ranges(graph, split);
  if (ranges.train_end == 0) throw ContractError("no training edges before the validation boundary");
  if (ranges.val_end == ranges.train_end) throw ContractError("validation split is empty");

  Rng init_rng(derive_seed(seed, 0));
  LinkPredictor model(mc, init_rng);
  if (model.embedder().time_encoder().uses_standardizer()) {
    model.embedder().time_encoder().set_standardizer(fit_link_standardizer(graph, ranges.train_end, mc));
  }
  ParameterList params = model.parameters();
  Adam adam(params.tensors(), AdamOptions{.lr = cfg.lr});
  Rng dropout_rng(derive_seed(seed, 1));
  Rng negative_rng(derive_seed(seed, 2));
  const std::uint64_t val_seed = derive_seed(seed, 3);
  const std::uint64_t test_seed = derive_seed(seed, 4);
  const ForwardContext train_ctx{true, mc.dropout, &dropout_rng};

  TrainedRun run;
  run.result.seed = seed;
  run.result.parameter_count = params.count();
  ExperimentConfig stored = cfg;
  stored.model = mc;
  stored.seeds = {seed};
  auto snapshot = [&](NsStrategy by, std::size_t epoch) {
    Checkpoint c = capture_checkpoint(model);
    c.experiment = stored;
    c.seed = seed;
    c.selected_by = by;
    c.epoch = epoch;
    c.split = split;
    return c;
  };

  double best_random = -std::numeric_limits<double>::infinity();
  double best_hist = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<EdgeEvent> batch;
  std::vector<double> labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t from = 0; from < ranges.train_end; from += cfg.batch_size) {
      const std::size_t to = std::min(ranges.train_end, from + cfg.batch_size);
      std::span<const EdgeEvent> positives(graph.edges().data() + from, to - from);
      const auto negatives = sample_random_negatives(positives, graph.num_nodes(), negative_rng, batches);
      batch.assign(positives.begin(), positives.end());
      batch.insert(batch.end(), negatives.edges.begin(), negatives.edges.end());
      labels.assign(positives.size(), 1.0);
      labels.resize(batch.size(), 0.0);

      adam.zero_grad();
      Tensor loss = bce_with_logits(model.logits(batch, graph, train_ctx), labels);
      if (!std::isfinite(loss.item())) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (edges " + std::to_string(from) + ".." +
                            std::to_string(to) + ")");
      }
      loss.backward();
      adam.step();
      loss_sum += loss.item();
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(batches);
    rec.val_ap_random =
        evaluate_link_model(model, graph, ranges.train_end, ranges.val_end, NsStrategy::random, cfg.batch_size, val_seed).ap;
    rec.val_ap_hist = evaluate_link_model(model, graph, ranges.train_end, ranges.val_end, NsStrategy::historical,
                                          cfg.batch_size, val_seed)
                          .ap;
    run.result.epochs.push_back(rec);

    bool improved = false;
    if (rec.val_ap_random > best_random) {
      best_random = rec.val_ap_random;
      run.best_random = snapshot(NsStrategy::random, epoch);
      run.result.best_epoch_random = epoch;
      improved = true;
    }
    if (rec.val_ap_hist > best_hist) {
      best_hist = rec.val_ap_hist;
      run.best_hist = snapshot(NsStrategy::historical, epoch);
      run.result.best_epoch_hist = epoch;
      improved = true;
    }
    stale = improved ? 0 : stale + 1;
    if (stale >= cfg.patience) break;
  }

  if (overrides.evaluate_test && ranges.val_end < graph.num_edges()) {
    restore_checkpoint(model, run.best_random);
    const auto r = evaluate_link_model(model, graph, ranges.val_end, graph.num_edges(), NsStrategy::random,
                                       cfg.batch_size, test_seed);
    restore_checkpoint(model, run.best_hist);
    const auto h = evaluate_link_model(model, graph, ranges.val_end, graph.num_edges(), NsStrategy::historical,
                                       cfg.batch_size, test_seed);
    run.result.test_ap_random = r.ap;
    run.result.test_auc_random = r.auc;
    run.result.test_ap_hist = h.ap;
    run.result.test_auc_hist = h.auc;
  }
  return run;
}

void write_run_outputs(const TrainedRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "metrics.csv");
    out << "epoch,loss,val_ap_random,val_ap_hist\n";
    for (const auto& e : run.result.epochs) {
      out << e.epoch << ',' << e.loss << ',' << e.val_ap_random << ',' << e.val_ap_hist << '\n';
    }
  }
  write_results_csv({run.result}, dir / "result.csv");
  save_checkpoint(run.best_random, dir / "checkpoint_random.json");
  save_checkpoint(run.best_hist, dir / "checkpoint_historical.json");
}

void write_results_csv(const std::vector<RunResult>& results, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "seed,test_ap_random,test_ap_hist,test_auc_random,test_auc_hist,best_epoch_random,best_epoch_hist,"
         "parameter_count\n";
  for (const auto& r : results) {
    out << r.seed << ',' << r.test_ap_random << ',' << r.test_ap_hist << ',' << r.test_auc_random << ','
        << r.test_auc_hist << ',' << r.best_epoch_random << ',' << r.best_epoch_hist << ',' << r.parameter_count
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Attention export

std::vector<AttentionRecord> export_attention_records(const LinkPredictor& model, const TemporalGraph& graph,
                                                      std::span<const EdgeEvent> sample) {
  const auto arch = model.config().architecture;
  if (arch != Architecture::dygformer_separate && arch != Architecture::dygdecoder) {
    throw ContractError("attention export needs a dygformer_separate or dygdecoder model");
  }
  const bool causal = arch == Architecture::dygdecoder;
  constexpr std::size_t kChunk = 200;
  std::vector<AttentionRecord> records;
  const ForwardContext ctx;
  for (std::size_t from = 0; from < sample.size(); from += kChunk) {
    AttentionCapture capture;
    model.logits(sample.subspan(from, std::min(kChunk, sample.size() - from)), graph, ctx, &capture);
    for (const auto& seq : capture.sequences) {
      const std::size_t first = seq.has_bos ? 1 : 0;
      const std::size_t n = seq.position_times.size();
      for (std::size_t q = first; q < n; ++q) {
        const std::size_t last_key = causal ? q : n - 1;
        for (std::size_t k = first; k <= last_key; ++k) {
          records.push_back({seq.source, seq.target_time - seq.position_times[q],
                             seq.target_time - seq.position_times[k], seq.map.at(q, k)});
        }
      }
    }
  }
  return records;
}

std::vector<EdgeEvent> sample_test_edges(const TemporalGraph& graph, const SplitBoundaries& split, std::size_t k,
                                         std::uint64_t seed) {
  const auto ranges = split_ranges(graph, split);
  std::vector<std::size_t> idx(graph.num_edges() - ranges.val_end);
  std::iota(idx.begin(), idx.end(), ranges.val_end);
  Rng rng(seed);
  const std::size_t take = std::min(k, idx.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  std::vector<EdgeEvent> out;
  for (auto e : idx) out.push_back(graph.edge(e));
  return out;
}

void write_attention_records(const std::vector<AttentionRecord>& records, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "role,t_minus_tq,t_minus_tk,score\n";
  for (const auto& r : records) {
    out << (r.source ? "source" : "destination") << ',' << r.t_minus_tq << ',' << r.t_minus_tk << ',' << r.score
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<SweepRow> dimension_sweep(const ExperimentConfig& cfg, const TemporalGraph& graph,
                                      std::span<const std::size_t> dims, bool train) {
  std::vector<SweepRow> rows;
  for (std::size_t dim : dims) {
    ExperimentConfig c = cfg;
    if (c.model.architecture == Architecture::tgat) {
      c.model.time_encoder.dim = dim;
    } else {
      c.model.time_channel_dim = dim;
    }
    SweepRow row;
    row.dim = dim;
    Rng rng(derive_seed(c.seeds.front(), 0));
    row.parameter_count = count_parameters(LinkPredictor(resolve_model_config(c.model, graph), rng)).total;
    if (train) {
      const auto run = train_link_model(c, graph, c.seeds.front());
      row.test_ap_random = run.result.test_ap_random;
      row.test_ap_hist = run.result.test_ap_hist;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "dim,test_ap_random,test_ap_hist,parameter_count\n";
  for (const auto& r : rows) out << r.dim << ',' << r.test_ap_random << ',' << r.test_ap_hist << ',' << r.parameter_count << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

namespace {

SyntheticConfig run_data_config(const SynthExperimentConfig& cfg, std::size_t run) {
  SyntheticConfig data = cfg.data;
  data.seed = cfg.data.seed + run;
  return data;
}

}  // namespace

SynthExperimentResult run_synth_experiment(const SynthExperimentConfig& cfg) {
  SynthExperimentResult out;
  const bool profile = cfg.model.layers == 1 && cfg.model.mode == AttentionMode::autoregressive;
  for (std::size_t r = 0; r < cfg.runs; ++r) {
    const auto data = generate_sequences(run_data_config(cfg, r));
    Rng init(derive_seed(cfg.data.seed, 1000 + r));
    SequenceClassifier model(cfg.model, init);
    SyntheticTrainOptions opts = cfg.train;
    opts.seed = derive_seed(cfg.data.seed, 2000 + r);
    out.runs.push_back(train_sequence_classifier(model, data, opts));
    out.mean_test_accuracy += out.runs.back().test_accuracy;
    if (profile) {
      const auto p = extract_avg_attention(model, data.test, cfg.data.decay);
      if (!out.attention) {
        out.attention = AttentionProfile{std::vector<double>(p.learned.size()), std::vector<double>(p.truth.size())};
      }
      for (std::size_t m = 0; m < p.learned.size(); ++m) {
        out.attention->learned[m] += p.learned[m] / static_cast<double>(cfg.runs);
        out.attention->truth[m] += p.truth[m] / static_cast<double>(cfg.runs);
      }
    }
  }
  out.mean_test_accuracy /= static_cast<double>(cfg.runs);
  return out;
}

void write_synth_outputs(const SynthExperimentConfig& cfg, const SynthExperimentResult& result) {
  std::filesystem::create_directories(cfg.output_dir);
  {
    auto out = open_output(cfg.output_dir / "synth_result.csv");
    out << "run,test_accuracy,best_val_accuracy,best_epoch,epochs\n";
    for (std::size_t r = 0; r < result.runs.size(); ++r) {
      const auto& run = result.runs[r];
      out << r << ',' << run.test_accuracy << ',' << run.best_val_accuracy << ',' << run.best_epoch << ','
          << run.epoch_loss.size() << '\n';
    }
  }
  if (result.attention) write_attention_profile_csv(*result.attention, cfg.output_dir / "attention_profile.csv");
  write_sequences_csv(generate_sequences(run_data_config(cfg, 0)), cfg.output_dir / "sequences.csv");
}

}  // namespace tempora
