#include "tempora/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tempora/errors.hpp"

namespace tempora {

using nlohmann::json;

namespace {

void require_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ContractError(std::string(where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto k : allowed) known = known || it.key() == k;
    if (!known) throw ContractError("unknown config key '" + std::string(where) + "." + it.key() + "'");
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) return;
  try {
    it->get_to(out);
  } catch (const json::exception& e) {
    throw ContractError("config key '" + std::string(key) + "': " + e.what());
  }
}

void read_path(const json& j, std::string_view key, std::filesystem::path& out) {
  std::string s;
  read(j, key, s);
  if (!s.empty()) out = s;
}

json parse_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SplitMode parse_split_mode(std::string_view s) {
  if (s == "percentile") return SplitMode::percentile;
  if (s == "duration") return SplitMode::duration;
  throw ContractError("unknown split mode '" + std::string(s) + "'");
}

}  // namespace

TemporalGraph generate_toy_graph(const ToyGraphConfig& cfg) {
  if (cfg.nodes < 2) throw ContractError("toy graph needs at least two nodes");
  Rng rng(cfg.seed);
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(cfg.nodes - 1));
  std::exponential_distribution<double> gap(1.0 / cfg.mean_gap);
  std::bernoulli_distribution repeat(cfg.repeat_probability);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<EdgeEvent> edges;
  double t = 0.0;
  for (std::size_t e = 0; e < cfg.edges; ++e) {
    t += gap(rng);
    if (!edges.empty() && repeat(rng)) {
      std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
      const auto& prev = edges[pick(rng)];
      edges.push_back({prev.src, prev.dst, t});
    } else {
      NodeId u = node(rng), v = node(rng);
      while (v == u) v = node(rng);
      edges.push_back({u, v, t});
    }
  }
  FeatureTable ef{cfg.edge_feature_dim, {}}, nf{cfg.node_feature_dim, {}};
  ef.values.resize(cfg.edges * cfg.edge_feature_dim);
  for (auto& v : ef.values) v = normal(rng);
  nf.values.resize(cfg.nodes * cfg.node_feature_dim);
  for (auto& v : nf.values) v = normal(rng);
  return TemporalGraph(cfg.nodes, std::move(edges), std::move(ef), std::move(nf));
}

TemporalGraph load_dataset(const DatasetConfig& cfg) {
  if (!cfg.path.empty()) return load_edge_list(cfg.path, LoadOptions{cfg.node_features});
  if (cfg.toy) return generate_toy_graph(*cfg.toy);
  throw ContractError("dataset needs a path or a toy generator");
}

void ExperimentConfig::validate() const {
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  if (seeds.empty()) throw ContractError("at least one seed is required");
  if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  model.validate();
}

std::optional<std::uint64_t> seed_from_environment() {
  const char* raw = std::getenv("TEMPORA_SEED");
  if (!raw || !*raw) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || *end != '\0' || raw[0] == '-') throw ContractError("TEMPORA_SEED must be an unsigned integer");
  return static_cast<std::uint64_t>(v);
}

ExperimentConfig parse_experiment_config(std::string_view json_text, bool seed_override) {
  const json root = parse_text(json_text);
  require_keys(root, "config",
               {"dataset", "model", "time_encoder", "train", "eval", "seed", "seeds", "output_dir"});
  ExperimentConfig cfg;

  if (root.contains("dataset")) {
    const auto& d = root["dataset"];
    require_keys(d, "dataset", {"path", "node_features", "toy", "split"});
    read_path(d, "path", cfg.dataset.path);
    read_path(d, "node_features", cfg.dataset.node_features);
    if (d.contains("split")) cfg.dataset.split = parse_split_mode(d["split"].get<std::string>());
    if (d.contains("toy")) {
      const auto& t = d["toy"];
      require_keys(t, "dataset.toy",
                   {"nodes", "edges", "node_feature_dim", "edge_feature_dim", "repeat_probability", "mean_gap", "seed"});
      ToyGraphConfig toy;
      read(t, "nodes", toy.nodes);
      read(t, "edges", toy.edges);
      read(t, "node_feature_dim", toy.node_feature_dim);
      read(t, "edge_feature_dim", toy.edge_feature_dim);
      read(t, "repeat_probability", toy.repeat_probability);
      read(t, "mean_gap", toy.mean_gap);
      read(t, "seed", toy.seed);
      cfg.dataset.toy = toy;
    }
  }

  if (root.contains("model")) {
    const auto& m = root["model"];
    require_keys(m, "model",
                 {"architecture", "layers", "dropout", "neighbors", "attn_dim", "embed_dim", "mlp_dim", "channel_dim",
                  "time_channel_dim", "cooccurrence_dim", "patch_size", "max_sequence_length", "out_dim",
                  "node_feature_dim", "edge_feature_dim"});
    auto& mc = cfg.model;
    if (m.contains("architecture")) mc.architecture = parse_architecture(m["architecture"].get<std::string>());
    read(m, "layers", mc.layers);
    read(m, "dropout", mc.dropout);
    read(m, "neighbors", mc.neighbors);
    read(m, "attn_dim", mc.attn_dim);
    read(m, "embed_dim", mc.embed_dim);
    read(m, "mlp_dim", mc.mlp_dim);
    read(m, "channel_dim", mc.channel_dim);
    read(m, "time_channel_dim", mc.time_channel_dim);
    read(m, "cooccurrence_dim", mc.cooccurrence_dim);
    read(m, "patch_size", mc.patch_size);
    read(m, "max_sequence_length", mc.max_sequence_length);
    read(m, "out_dim", mc.out_dim);
    read(m, "node_feature_dim", mc.node_feature_dim);
    read(m, "edge_feature_dim", mc.edge_feature_dim);
  }

  if (root.contains("time_encoder")) {
    const auto& t = root["time_encoder"];
    require_keys(t, "time_encoder", {"family", "d_T"});
    if (t.contains("family")) cfg.model.time_encoder.family = parse_encoder_family(t["family"].get<std::string>());
    read(t, "d_T", cfg.model.time_encoder.dim);
  }

  if (root.contains("train")) {
    const auto& t = root["train"];
    require_keys(t, "train", {"batch_size", "lr", "epochs", "patience"});
    read(t, "batch_size", cfg.batch_size);
    read(t, "lr", cfg.lr);
    read(t, "epochs", cfg.epochs);
    read(t, "patience", cfg.patience);
  }

  if (root.contains("eval")) {
    const auto& e = root["eval"];
    require_keys(e, "eval", {"negative_sampling"});
    if (e.contains("negative_sampling")) cfg.eval_ns = parse_ns_strategy(e["negative_sampling"].get<std::string>());
  }

  if (root.contains("seeds")) {
    cfg.seeds.clear();
    read(root, "seeds", cfg.seeds);
  }
  if (root.contains("seed")) {
    std::uint64_t s = 0;
    read(root, "seed", s);
    cfg.seeds = {s};
  }
  read_path(root, "output_dir", cfg.output_dir);
  if (seed_override) {
    if (auto env = seed_from_environment()) cfg.seeds = {*env};
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  auto cfg = parse_experiment_config(read_file(path));
  // Relative dataset paths resolve against the config file's directory.
  const auto base = path.parent_path();
  if (!cfg.dataset.path.empty() && cfg.dataset.path.is_relative()) cfg.dataset.path = base / cfg.dataset.path;
  if (!cfg.dataset.node_features.empty() && cfg.dataset.node_features.is_relative()) {
    cfg.dataset.node_features = base / cfg.dataset.node_features;
  }
  return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json root;
  json d = json::object();
  if (!cfg.dataset.path.empty()) d["path"] = cfg.dataset.path.string();
  if (!cfg.dataset.node_features.empty()) d["node_features"] = cfg.dataset.node_features.string();
  d["split"] = cfg.dataset.split == SplitMode::percentile ? "percentile" : "duration";
  if (cfg.dataset.toy) {
    const auto& t = *cfg.dataset.toy;
    d["toy"] = {{"nodes", t.nodes},
                {"edges", t.edges},
                {"node_feature_dim", t.node_feature_dim},
                {"edge_feature_dim", t.edge_feature_dim},
                {"repeat_probability", t.repeat_probability},
                {"mean_gap", t.mean_gap},
                {"seed", t.seed}};
  }
  root["dataset"] = d;
  const auto& m = cfg.model;
  root["model"] = {{"architecture", std::string(to_string(m.architecture))},
                   {"layers", m.layers},
                   {"dropout", m.dropout},
                   {"neighbors", m.neighbors},
                   {"attn_dim", m.attn_dim},
                   {"embed_dim", m.embed_dim},
                   {"mlp_dim", m.mlp_dim},
                   {"channel_dim", m.channel_dim},
                   {"time_channel_dim", m.time_channel_dim},
                   {"cooccurrence_dim", m.cooccurrence_dim},
                   {"patch_size", m.patch_size},
                   {"max_sequence_length", m.max_sequence_length},
                   {"out_dim", m.out_dim},
                   {"node_feature_dim", m.node_feature_dim},
                   {"edge_feature_dim", m.edge_feature_dim}};
  root["time_encoder"] = {{"family", std::string(to_string(m.time_encoder.family))}, {"d_T", m.time_encoder.dim}};
  root["train"] = {{"batch_size", cfg.batch_size}, {"lr", cfg.lr}, {"epochs", cfg.epochs}, {"patience", cfg.patience}};
  root["eval"] = {{"negative_sampling", std::string(to_string(cfg.eval_ns))}};
  root["seeds"] = cfg.seeds;
  root["output_dir"] = cfg.output_dir.string();
  return root.dump(2);
}

SynthExperimentConfig parse_synth_config(std::string_view json_text) {
  const json root = parse_text(json_text);
  require_keys(root, "config", {"data", "model", "train", "runs", "seed", "output_dir"});
  SynthExperimentConfig cfg;
  if (root.contains("data")) {
    const auto& d = root["data"];
    require_keys(d, "data", {"intensity", "decay", "events", "sequences", "noise_variance", "split"});
    read(d, "intensity", cfg.data.intensity);
    read(d, "decay", cfg.data.decay);
    read(d, "events", cfg.data.events);
    read(d, "sequences", cfg.data.sequences);
    read(d, "noise_variance", cfg.data.noise_variance);
    if (d.contains("split")) {
      std::vector<double> f;
      read(d, "split", f);
      if (f.size() != 3) throw ContractError("data.split needs three fractions");
      cfg.data.train_fraction = f[0];
      cfg.data.val_fraction = f[1];
      cfg.data.test_fraction = f[2];
    }
  }
  if (root.contains("model")) {
    const auto& m = root["model"];
    require_keys(m, "model", {"family", "d_T", "hidden_dim", "layers", "mode", "dropout"});
    if (m.contains("family")) cfg.model.family = parse_encoder_family(m["family"].get<std::string>());
    read(m, "d_T", cfg.model.time_dim);
    read(m, "hidden_dim", cfg.model.hidden_dim);
    read(m, "layers", cfg.model.layers);
    read(m, "dropout", cfg.model.dropout);
    if (m.contains("mode")) {
      const auto mode = m["mode"].get<std::string>();
      if (mode == "full") cfg.model.mode = AttentionMode::full;
      else if (mode == "autoregressive") cfg.model.mode = AttentionMode::autoregressive;
      else throw ContractError("unknown attention mode '" + mode + "'");
    }
  }
  if (root.contains("train")) {
    const auto& t = root["train"];
    require_keys(t, "train", {"epochs", "batch_size", "patience", "lr"});
    read(t, "epochs", cfg.train.epochs);
    read(t, "batch_size", cfg.train.batch_size);
    read(t, "patience", cfg.train.patience);
    read(t, "lr", cfg.train.lr);
  }
  read(root, "runs", cfg.runs);
  read(root, "seed", cfg.data.seed);
  read_path(root, "output_dir", cfg.output_dir);
  if (auto env = seed_from_environment()) cfg.data.seed = *env;
  if (cfg.runs < 1) throw ContractError("runs must be >= 1");
  cfg.data.validate();
  return cfg;
}

SynthExperimentConfig load_synth_config(const std::filesystem::path& path) {
  return parse_synth_config(read_file(path));
}

}  // namespace tempora
