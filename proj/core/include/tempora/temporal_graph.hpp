#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tempora {

using NodeId = std::uint32_t;

struct EdgeEvent {
  NodeId src = 0;
  NodeId dst = 0;
  double time = 0.0;

  friend bool operator==(const EdgeEvent&, const EdgeEvent&) = default;
};

struct TemporalNeighbor {
  NodeId node = 0;
  double time = 0.0;
  std::size_t edge = 0;  // index into the graph's chronological edge list

  friend bool operator==(const TemporalNeighbor&, const TemporalNeighbor&) = default;
};

// Row-major feature table; dim == 0 means unattributed.
struct FeatureTable {
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t rows() const { return dim ? values.size() / dim : 0; }
};

/// Continuous-time dynamic graph: dense node ids 0..N-1 and chronologically
/// ordered events. Immutable after construction; all queries are read-only.
class TemporalGraph {
 public:
  TemporalGraph() = default;
  // Sorts edges by time (stable). Edge feature rows follow their edges.
  TemporalGraph(std::size_t num_nodes, std::vector<EdgeEvent> edges, FeatureTable edge_features = {},
                FeatureTable node_features = {});

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<EdgeEvent>& edges() const { return edges_; }
  const EdgeEvent& edge(std::size_t e) const { return edges_[e]; }
  double horizon() const { return edges_.empty() ? 0.0 : edges_.back().time; }

  std::size_t edge_feature_dim() const { return edge_features_.dim; }
  std::size_t node_feature_dim() const { return node_features_.dim; }
  // Empty span for unattributed graphs.
  std::span<const double> edge_feature(std::size_t e) const;
  std::span<const double> node_feature(NodeId v) const;

  // Original ids from the source file, indexed by dense id (empty if the graph
  // was built in memory).
  const std::vector<std::int64_t>& original_ids() const { return original_ids_; }
  void set_original_ids(std::vector<std::int64_t> ids) { original_ids_ = std::move(ids); }

  // At most k events of `node` with time strictly before t, ascending in time.
  std::vector<TemporalNeighbor> recent_neighbors(NodeId node, double t, std::size_t k) const;
  // Every event of `node`, ascending in time.
  std::span<const TemporalNeighbor> history(NodeId node) const { return adjacency_[node]; }

  // First edge index whose time is >= t.
  std::size_t lower_bound_time(double t) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<EdgeEvent> edges_;
  FeatureTable edge_features_;
  FeatureTable node_features_;
  std::vector<std::vector<TemporalNeighbor>> adjacency_;
  std::vector<std::int64_t> original_ids_;
};

struct LoadOptions {
  std::filesystem::path node_features;  // optional `node,feat_0..` CSV
};

// Reads `u,v,ts[,feat_0..]` with a header row. Ids are re-indexed densely in
// ascending order of their original integer value.
TemporalGraph load_edge_list(const std::filesystem::path& path, const LoadOptions& options = {});
void write_edge_list(const TemporalGraph& graph, const std::filesystem::path& path);

enum class SplitMode {
  percentile,  // boundaries at timestamp quantiles of the edge list
  duration     // boundaries at fractions of [first, last] timestamp span
};

struct SplitBoundaries {
  double t_val = 0.0;
  double t_test = 0.0;
};

enum class Split : std::size_t { train = 0, val = 1, test = 2 };

// Train [0, t_val), validation [t_val, t_test), test [t_test, T].
SplitBoundaries chronological_split(const TemporalGraph& graph, double val_start = 0.70,
                                    double test_start = 0.85, SplitMode mode = SplitMode::percentile);

Split split_of(double t, const SplitBoundaries& b);

struct SplitRanges {
  std::size_t train_end = 0;  // edges [0, train_end) are training edges
  std::size_t val_end = 0;    // [train_end, val_end) validation, rest test
};

SplitRanges split_ranges(const TemporalGraph& graph, const SplitBoundaries& b);

struct WaitingSummary {
  double mean = 0.0;
  double median = 0.0;
  std::size_t count = 0;
};

// Indexed by Split.
struct WaitingTimeStats {
  std::array<WaitingSummary, 3> source;
  std::array<WaitingSummary, 3> destination;
};

// Time since each endpoint's previous interaction (any role); a node's first
// appearance contributes nothing.
WaitingTimeStats waiting_time_stats(const TemporalGraph& graph, const SplitBoundaries& b);

}  // namespace tempora
