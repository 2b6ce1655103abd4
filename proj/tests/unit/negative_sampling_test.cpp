#include <gtest/gtest.h>

#include <random>
#include <set>

#include "tempora/errors.hpp"
#include "tempora/negative_sampling.hpp"

namespace tempora {
namespace {

// 0.99 quantile of the chi-square distribution with 19 degrees of freedom.
constexpr double kChiSquare19At99 = 36.1909;

TemporalGraph random_graph(std::size_t nodes, std::size_t edges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(nodes - 1));
  std::uniform_int_distribution<int> tick(0, 500);
  std::vector<EdgeEvent> ev;
  for (std::size_t i = 0; i < edges; ++i) ev.push_back({node(rng), node(rng), static_cast<double>(tick(rng))});
  return TemporalGraph(nodes, std::move(ev));
}

TEST(RandomNegatives, ContractOnTinyGraph) {
  Rng rng(1);
  const EdgeEvent pos[] = {{0, 1, 9.0}};
  auto neg = sample_random_negatives(pos, 3, rng, 4);
  ASSERT_EQ(neg.size(), 1u);
  EXPECT_EQ(neg.edges[0].time, 9.0);
  EXPECT_LT(neg.edges[0].src, 3u);
  EXPECT_LT(neg.edges[0].dst, 3u);
  EXPECT_EQ(neg.strategy, NsStrategy::random);
  EXPECT_EQ(neg.batch_id, 4u);
  EXPECT_EQ(neg.fallback_count(), 0u);
}

TEST(RandomNegatives, DeterministicForSeed) {
  std::vector<EdgeEvent> pos(50, {2, 3, 1.5});
  Rng a(99), b(99);
  EXPECT_EQ(sample_random_negatives(pos, 40, a).edges, sample_random_negatives(pos, 40, b).edges);
}

TEST(RandomNegatives, MarginalsPassChiSquare) {
  const std::size_t nodes = 20, draws = 100000;
  std::vector<EdgeEvent> pos(draws, {0, 0, 1.0});
  Rng rng(derive_seed(5, 0));
  auto neg = sample_random_negatives(pos, nodes, rng);
  std::vector<double> cu(nodes, 0.0), cv(nodes, 0.0);
  for (const auto& e : neg.edges) {
    cu[e.src] += 1.0;
    cv[e.dst] += 1.0;
  }
  const double expected = static_cast<double>(draws) / nodes;
  double chi_u = 0.0, chi_v = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    chi_u += (cu[i] - expected) * (cu[i] - expected) / expected;
    chi_v += (cv[i] - expected) * (cv[i] - expected) / expected;
  }
  EXPECT_LT(chi_u, kChiSquare19At99);
  EXPECT_LT(chi_v, kChiSquare19At99);
}

TEST(RandomNegatives, EmptyBatchIsContractError) {
  Rng rng(0);
  EXPECT_THROW(sample_random_negatives({}, 5, rng), ContractError);
}

TEST(HistoricalNegatives, SinglePairPool) {
  PairSet history;
  history.insert(0, 1);  // (a, b)
  const EdgeEvent pos[] = {{0, 2, 7.0}};  // (a, c, t)
  Rng rng(2);
  auto neg = sample_historical_negatives(pos, history, 3, rng);
  ASSERT_EQ(neg.size(), 1u);
  EXPECT_EQ(neg.edges[0], (EdgeEvent{0, 1, 7.0}));
  EXPECT_FALSE(neg.fallback[0]);
}

TEST(HistoricalNegatives, EmptyPoolFallsBackAndFlags) {
  PairSet history;
  history.insert(0, 2);
  const EdgeEvent pos[] = {{0, 2, 1.0}, {1, 2, 1.0}};
  Rng rng(3);
  auto neg = sample_historical_negatives(pos, history, 3, rng);
  ASSERT_EQ(neg.size(), 2u);
  EXPECT_TRUE(neg.fallback[0]);
  EXPECT_TRUE(neg.fallback[1]);
  EXPECT_EQ(neg.fallback_count(), 2u);
  EXPECT_EQ(neg.edges[1].time, 1.0);
}

TEST(HistoricalNegatives, EmptyPoolWithoutFallbackThrows) {
  PairSet history;
  const EdgeEvent pos[] = {{0, 2, 1.0}};
  Rng rng(4);
  EXPECT_THROW(sample_historical_negatives(pos, history, 3, rng, {false}), SamplerError);
}

TEST(HistoricalNegatives, SmallPoolWithoutFallbackRedraws) {
  PairSet history;
  history.insert(3, 4);
  std::vector<EdgeEvent> pos(5, {0, 1, 2.0});
  Rng rng(5);
  auto neg = sample_historical_negatives(pos, history, 5, rng, {false});
  for (std::size_t i = 0; i < neg.size(); ++i) {
    EXPECT_EQ(neg.edges[i], (EdgeEvent{3, 4, 2.0}));
    EXPECT_FALSE(neg.fallback[i]);
  }
}

TEST(HistoricalNegatives, MembershipOverManyBatches) {
  std::size_t batches = 0, violations = 0, duplicates = 0;
  for (std::uint64_t g_seed = 0; batches < 10000; ++g_seed) {
    auto g = random_graph(15 + g_seed % 20, 600, g_seed);
    std::mt19937_64 size_rng(g_seed);
    std::uniform_int_distribution<std::size_t> bsize(1, 40);
    HistoryTracker tracker(g);
    std::size_t begin = g.num_edges() / 3;
    while (begin < g.num_edges() && batches < 10000) {
      const std::size_t end = std::min(g.num_edges(), begin + bsize(size_rng));
      std::span<const EdgeEvent> pos(g.edges().data() + begin, end - begin);
      const double t_check = pos.front().time;
      const PairSet& history = tracker.advance_to(t_check);
      const PairSet oracle = pairs_before(g, t_check);
      std::set<std::pair<NodeId, NodeId>> window;
      for (const auto& e : pos) window.insert({e.src, e.dst});
      Rng rng(derive_seed(g_seed, batches));
      auto neg = sample_historical_negatives(pos, history, g.num_nodes(), rng, {}, batches);
      ASSERT_EQ(neg.size(), pos.size());
      std::set<std::pair<NodeId, NodeId>> seen;
      std::size_t candidates = 0;
      for (auto k : oracle.items())
        if (!window.count({static_cast<NodeId>(k >> 32), static_cast<NodeId>(k & 0xffffffffu)})) ++candidates;
      for (std::size_t i = 0; i < neg.size(); ++i) {
        const auto& e = neg.edges[i];
        EXPECT_EQ(e.time, pos[i].time);
        if (neg.fallback[i]) {
          EXPECT_GE(i, candidates);
          continue;
        }
        if (!oracle.contains(e.src, e.dst) || window.count({e.src, e.dst})) ++violations;
        if (!seen.insert({e.src, e.dst}).second) ++duplicates;
      }
      ++batches;
      begin = end;
    }
  }
  EXPECT_EQ(violations, 0u);
  EXPECT_EQ(duplicates, 0u);
}

TEST(HistoricalNegatives, DeterministicForSeed) {
  auto g = random_graph(30, 400, 7);
  auto history = pairs_before(g, 300.0);
  std::span<const EdgeEvent> pos(g.edges().data() + g.lower_bound_time(300.0), 50);
  Rng a(11), b(11);
  EXPECT_EQ(sample_historical_negatives(pos, history, 30, a).edges,
            sample_historical_negatives(pos, history, 30, b).edges);
}

TEST(HistoryTracker, MatchesFromScratchPairs) {
  auto g = random_graph(10, 300, 8);
  HistoryTracker tracker(g);
  for (double t : {0.0, 10.0, 10.0, 250.0, 499.0, 1000.0}) {
    EXPECT_EQ(tracker.advance_to(t).items(), pairs_before(g, t).items());
  }
}

TEST(DeriveSeed, StableAndSpread) {
  EXPECT_EQ(derive_seed(3, 4), derive_seed(3, 4));
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10; ++s)
    for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(s, i));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(NsStrategy, NamesRoundTrip) {
  EXPECT_EQ(parse_ns_strategy("random"), NsStrategy::random);
  EXPECT_EQ(parse_ns_strategy(to_string(NsStrategy::historical)), NsStrategy::historical);
  EXPECT_THROW(parse_ns_strategy("inductive"), ContractError);
}

}  // namespace
}  // namespace tempora
