#include "tempora/negative_sampling.hpp"

#include <algorithm>
#include <string>

#include "tempora/errors.hpp"

namespace tempora {

std::string_view to_string(NsStrategy s) { return s == NsStrategy::random ? "random" : "historical"; }

NsStrategy parse_ns_strategy(std::string_view name) {
  if (name == "random" || name == "rnd") return NsStrategy::random;
  if (name == "historical" || name == "hist") return NsStrategy::historical;
  throw ContractError("unknown negative sampling strategy '" + std::string(name) + "'");
}

std::size_t NegativeBatch::fallback_count() const {
  return static_cast<std::size_t>(std::count(fallback.begin(), fallback.end(), true));
}

bool PairSet::insert(NodeId u, NodeId v) {
  const auto k = key(u, v);
  if (!index_.insert(k).second) return false;
  items_.push_back(k);
  return true;
}

PairSet pairs_before(const TemporalGraph& graph, double t) {
  PairSet out;
  const auto end = graph.lower_bound_time(t);
  for (std::size_t e = 0; e < end; ++e) out.insert(graph.edge(e).src, graph.edge(e).dst);
  return out;
}

const PairSet& HistoryTracker::advance_to(double t) {
  const auto end = graph_->lower_bound_time(t);
  for (; next_ < end; ++next_) pairs_.insert(graph_->edge(next_).src, graph_->edge(next_).dst);
  return pairs_;
}

NegativeBatch sample_random_negatives(std::span<const EdgeEvent> positives, std::size_t num_nodes, Rng& rng,
                                      std::size_t batch_id) {
  if (positives.empty()) throw ContractError("random negative sampling needs a non-empty batch");
  if (num_nodes == 0) throw ContractError("random negative sampling needs a non-empty node set");
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(num_nodes - 1));
  NegativeBatch out;
  out.strategy = NsStrategy::random;
  out.batch_id = batch_id;
  out.edges.reserve(positives.size());
  for (const auto& p : positives) {
    const NodeId u = node(rng);
    const NodeId v = node(rng);
    out.edges.push_back({u, v, p.time});
  }
  out.fallback.assign(out.edges.size(), false);
  return out;
}

NegativeBatch sample_historical_negatives(std::span<const EdgeEvent> positives, const PairSet& history,
                                          std::size_t num_nodes, Rng& rng, const HistoricalOptions& options,
                                          std::size_t batch_id) {
  if (positives.empty()) throw ContractError("historical negative sampling needs a non-empty batch");
  PairSet batch_pairs;
  for (const auto& p : positives) batch_pairs.insert(p.src, p.dst);

  std::vector<std::uint64_t> pool;
  pool.reserve(history.size());
  for (auto k : history.items()) {
    if (!batch_pairs.contains(static_cast<NodeId>(k >> 32), static_cast<NodeId>(k & 0xffffffffu))) pool.push_back(k);
  }
  if (pool.empty() && !options.fallback_to_random) {
    throw SamplerError("historical candidate pool is empty and random fallback is disabled");
  }

  NegativeBatch out;
  out.strategy = NsStrategy::historical;
  out.batch_id = batch_id;
  out.edges.reserve(positives.size());
  out.fallback.reserve(positives.size());
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(std::max<std::size_t>(num_nodes, 1) - 1));
  std::size_t drawn = 0;  // pool[0, drawn) already used
  for (const auto& p : positives) {
    std::uint64_t k;
    bool fell_back = false;
    if (drawn < pool.size()) {
      std::uniform_int_distribution<std::size_t> pick(drawn, pool.size() - 1);
      std::swap(pool[drawn], pool[pick(rng)]);
      k = pool[drawn++];
    } else if (options.fallback_to_random) {
      k = PairSet::key(node(rng), node(rng));
      fell_back = true;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      k = pool[pick(rng)];
    }
    out.edges.push_back({static_cast<NodeId>(k >> 32), static_cast<NodeId>(k & 0xffffffffu), p.time});
    out.fallback.push_back(fell_back);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t index) {
  std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tempora
