#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tempora/config.hpp"
#include "tempora/models.hpp"
#include "tempora/negative_sampling.hpp"
#include "tempora/temporal_graph.hpp"

namespace tempora {

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_ap_random = 0.0;
  double val_ap_hist = 0.0;
};

struct EvalResult {
  double ap = 0.0;   // mean of per-batch AP, percent
  double auc = 0.0;  // mean of per-batch AUC, percent
  std::size_t batches = 0;
  std::size_t fallback_negatives = 0;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  double test_ap_random = 0.0;
  double test_ap_hist = 0.0;
  double test_auc_random = 0.0;
  double test_auc_hist = 0.0;
  std::size_t best_epoch_random = 0;
  std::size_t best_epoch_hist = 0;
  std::size_t parameter_count = 0;
};

// Parameter values plus everything needed to rebuild the model and its data.
struct Checkpoint {
  ExperimentConfig experiment;  // model feature widths resolved
  std::uint64_t seed = 0;
  NsStrategy selected_by = NsStrategy::random;
  std::size_t epoch = 0;
  SplitBoundaries split;
  std::optional<Standardizer> standardizer;
  std::vector<std::pair<std::string, std::vector<double>>> parameters;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies the model's parameter values and standardizer into a checkpoint body.
Checkpoint capture_checkpoint(const LinkPredictor& model);
// Overwrites `model` with checkpointed values; names and sizes must match.
void restore_checkpoint(LinkPredictor& model, const Checkpoint& ckpt);

// Model config with feature widths taken from the graph.
ModelConfig resolve_model_config(ModelConfig model, const TemporalGraph& graph);

// Fits the standardizer on t - t' between each training edge endpoint and its
// recent neighbors (the model's own neighbor budget).
Standardizer fit_link_standardizer(const TemporalGraph& graph, std::size_t train_end, const ModelConfig& model);

// Scores [begin, end) in chronological batches against one negative per
// positive. Negative draws depend only on (seed, batch index).
EvalResult evaluate_link_model(const LinkPredictor& model, const TemporalGraph& graph, std::size_t begin,
                               std::size_t end, NsStrategy strategy, std::size_t batch_size, std::uint64_t seed);

struct TrainedRun {
  RunResult result;
  Checkpoint best_random;
  Checkpoint best_hist;
};

struct TrainOverrides {
  std::optional<SplitBoundaries> split;  // instead of the chronological default
  bool evaluate_test = true;
};

// Trains under random negatives; snapshots the best validation AP under each
// strategy and reports test AP from the matching snapshot. Stops once neither
// validation AP has improved for `patience` epochs. Throws TrainingError on a
// non-finite loss.
TrainedRun train_link_model(const ExperimentConfig& cfg, const TemporalGraph& graph, std::uint64_t seed,
                            const TrainOverrides& overrides = {});

// Writes metrics.csv, result.csv and both checkpoints under `dir`.
void write_run_outputs(const TrainedRun& run, const std::filesystem::path& dir);
void write_results_csv(const std::vector<RunResult>& results, const std::filesystem::path& path);

struct AttentionRecord {
  bool source = true;
  double t_minus_tq = 0.0;
  double t_minus_tk = 0.0;
  double score = 0.0;
};

// Last-layer attention over `sample` edges, BOS excluded. Causal models
// contribute only keys at or before the query.
std::vector<AttentionRecord> export_attention_records(const LinkPredictor& model, const TemporalGraph& graph,
                                                      std::span<const EdgeEvent> sample);
// Up to k test edges drawn without replacement, kept in chronological order.
std::vector<EdgeEvent> sample_test_edges(const TemporalGraph& graph, const SplitBoundaries& split, std::size_t k,
                                         std::uint64_t seed);
void write_attention_records(const std::vector<AttentionRecord>& records, const std::filesystem::path& path);

struct SweepRow {
  std::size_t dim = 0;  // d_T for TGAT, d_tc for the DyGFormer family
  double test_ap_random = 0.0;
  double test_ap_hist = 0.0;
  std::size_t parameter_count = 0;
};

// One run (first seed) per dimension; with train=false only parameters are counted.
std::vector<SweepRow> dimension_sweep(const ExperimentConfig& cfg, const TemporalGraph& graph,
                                      std::span<const std::size_t> dims, bool train = true);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

struct SynthExperimentResult {
  std::vector<SyntheticRunResult> runs;
  double mean_test_accuracy = 0.0;
  // Mean over runs of the test-split profile; one-layer autoregressive only.
  std::optional<AttentionProfile> attention;
};

// Run r regenerates data with seed + r and reinitializes the model.
SynthExperimentResult run_synth_experiment(const SynthExperimentConfig& cfg);
// synth_result.csv, attention_profile.csv (when present) and sequences.csv of run 0.
void write_synth_outputs(const SynthExperimentConfig& cfg, const SynthExperimentResult& result);

}  // namespace tempora
