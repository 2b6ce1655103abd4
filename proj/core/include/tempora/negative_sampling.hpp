#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "tempora/ops.hpp"
#include "tempora/temporal_graph.hpp"

namespace tempora {

enum class NsStrategy { random, historical };

std::string_view to_string(NsStrategy s);
NsStrategy parse_ns_strategy(std::string_view name);

struct NegativeBatch {
  std::vector<EdgeEvent> edges;
  // fallback[i] is set when edges[i] came from the random fallback of the
  // historical sampler.
  std::vector<bool> fallback;
  NsStrategy strategy = NsStrategy::random;
  std::size_t batch_id = 0;

  std::size_t size() const { return edges.size(); }
  std::size_t fallback_count() const;
};

// Directed node-pair set with deterministic (insertion-order) enumeration.
class PairSet {
 public:
  static std::uint64_t key(NodeId u, NodeId v) { return (std::uint64_t{u} << 32) | v; }

  bool insert(NodeId u, NodeId v);
  bool contains(NodeId u, NodeId v) const { return index_.count(key(u, v)) != 0; }
  std::size_t size() const { return items_.size(); }
  const std::vector<std::uint64_t>& items() const { return items_; }

 private:
  std::unordered_set<std::uint64_t> index_;
  std::vector<std::uint64_t> items_;
};

// P(0, t): pairs of every edge with time < t.
PairSet pairs_before(const TemporalGraph& graph, double t);

// Grows P(0, t) incrementally as evaluation walks forward in time.
class HistoryTracker {
 public:
  explicit HistoryTracker(const TemporalGraph& graph) : graph_(&graph) {}
  const PairSet& advance_to(double t);
  const PairSet& pairs() const { return pairs_; }

 private:
  const TemporalGraph* graph_;
  std::size_t next_ = 0;
  PairSet pairs_;
};

// Uniform (u, v) over V x V per positive, timestamps copied. Self-loops and
// accidental positives are not rejected.
NegativeBatch sample_random_negatives(std::span<const EdgeEvent> positives, std::size_t num_nodes, Rng& rng,
                                      std::size_t batch_id = 0);

struct HistoricalOptions {
  bool fallback_to_random = true;
};

// Pairs from `history` = P(0, t_check) that do not occur among the batch's
// positive pairs, without replacement while the pool lasts. Once exhausted,
// remaining slots use random negatives (flagged) or, with fallback disabled,
// are redrawn from the pool. Throws SamplerError when the pool is empty and
// fallback is disabled.
NegativeBatch sample_historical_negatives(std::span<const EdgeEvent> positives, const PairSet& history,
                                          std::size_t num_nodes, Rng& rng, const HistoricalOptions& options = {},
                                          std::size_t batch_id = 0);

// splitmix64 mix of (run seed, index) for per-batch generators.
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t index);

}  // namespace tempora
