#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tempora/models.hpp"
#include "tempora/negative_sampling.hpp"
#include "tempora/synthetic.hpp"
#include "tempora/temporal_graph.hpp"

namespace tempora {

// Random temporal graph for smoke runs: each event repeats an earlier pair with
// probability `repeat_probability`, otherwise draws a fresh uniform pair.
struct ToyGraphConfig {
  std::size_t nodes = 50;
  std::size_t edges = 1000;
  std::size_t node_feature_dim = 0;
  std::size_t edge_feature_dim = 0;
  double repeat_probability = 0.5;
  double mean_gap = 1.0;
  std::uint64_t seed = 0;
};

TemporalGraph generate_toy_graph(const ToyGraphConfig& cfg);

struct DatasetConfig {
  std::filesystem::path path;           // u,v,ts[,feat..] CSV
  std::filesystem::path node_features;  // optional
  std::optional<ToyGraphConfig> toy;    // used when path is empty
  SplitMode split = SplitMode::percentile;
};

TemporalGraph load_dataset(const DatasetConfig& cfg);

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  std::size_t batch_size = 200;
  double lr = 1e-4;
  std::size_t epochs = 100;
  std::size_t patience = 20;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  NsStrategy eval_ns = NsStrategy::random;
  std::filesystem::path output_dir = "runs";

  void validate() const;
};

// Hierarchical JSON. Unknown keys are rejected. TEMPORA_SEED, when set and
// `seed_override` holds, replaces the seed list with that single seed.
ExperimentConfig parse_experiment_config(std::string_view json_text, bool seed_override = true);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

struct SynthExperimentConfig {
  SyntheticConfig data;
  ClassifierConfig model;
  SyntheticTrainOptions train;
  std::size_t runs = 10;
  std::filesystem::path output_dir = "runs/synth";
};

SynthExperimentConfig parse_synth_config(std::string_view json_text);
SynthExperimentConfig load_synth_config(const std::filesystem::path& path);

// Reads TEMPORA_SEED; throws ContractError when set but not an unsigned integer.
std::optional<std::uint64_t> seed_from_environment();

}  // namespace tempora
