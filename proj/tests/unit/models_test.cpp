#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "reference.hpp"
#include "tempora/errors.hpp"
#include "tempora/models.hpp"

namespace tempora {
namespace {

void randomize(Tensor& t, Rng& rng, double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.mutable_data()) v = n(rng);
}

void zero(Tensor& t) {
  for (auto& v : t.mutable_data()) v = 0.0;
}

FeatureTable random_table(std::size_t rows, std::size_t dim, Rng& rng) {
  FeatureTable t{dim, std::vector<double>(rows * dim)};
  std::normal_distribution<double> n;
  for (auto& v : t.values) v = n(rng);
  return t;
}

// Random attributed graph with integer timestamps in [0, horizon].
TemporalGraph toy_graph(std::size_t nodes, std::size_t edges, std::size_t dv, std::size_t de, std::uint64_t seed,
                        int horizon = 20) {
  Rng rng(seed);
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(nodes - 1));
  std::uniform_int_distribution<int> tick(0, horizon);
  std::vector<EdgeEvent> ev;
  for (std::size_t i = 0; i < edges; ++i) ev.push_back({node(rng), node(rng), static_cast<double>(tick(rng))});
  return TemporalGraph(nodes, std::move(ev), random_table(edges, de, rng), random_table(nodes, dv, rng));
}

// Same graph with extra edges appended (feature rows for them drawn at random).
TemporalGraph with_extra_edges(const TemporalGraph& g, const std::vector<EdgeEvent>& extra, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EdgeEvent> ev = g.edges();
  FeatureTable ef{g.edge_feature_dim(), {}};
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    auto f = g.edge_feature(e);
    ef.values.insert(ef.values.end(), f.begin(), f.end());
  }
  auto tail = random_table(extra.size(), g.edge_feature_dim(), rng);
  ef.values.insert(ef.values.end(), tail.values.begin(), tail.values.end());
  ev.insert(ev.end(), extra.begin(), extra.end());
  FeatureTable nf{g.node_feature_dim(), {}};
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    auto f = g.node_feature(v);
    nf.values.insert(nf.values.end(), f.begin(), f.end());
  }
  return TemporalGraph(g.num_nodes(), std::move(ev), std::move(ef), std::move(nf));
}

ModelConfig small_config(Architecture arch, const TemporalGraph& g, EncoderFamily family = EncoderFamily::sinusoidal_cos) {
  ModelConfig c;
  c.architecture = arch;
  c.layers = 2;
  c.dropout = 0.0;
  c.time_encoder = {family, 3};
  c.node_feature_dim = g.node_feature_dim();
  c.edge_feature_dim = g.edge_feature_dim();
  c.neighbors = 3;
  c.embed_dim = 4;
  c.mlp_dim = 5;
  c.channel_dim = 3;
  c.time_channel_dim = 2;
  c.cooccurrence_dim = 3;
  c.patch_size = 2;
  c.max_sequence_length = 5;
  c.out_dim = 4;
  return c;
}

void fit_if_needed(TimeEncoder& enc) {
  if (enc.uses_standardizer()) enc.set_standardizer({4.0, 3.0});
}

const ForwardContext kEval{};

void expect_rows(const Tensor& t, std::size_t row, const std::vector<double>& want, double tol) {
  ASSERT_EQ(t.cols(), want.size());
  for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(t(row, j), want[j], tol) << "col " << j;
}

void expect_same(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.data()[i], b.data()[i]) << "entry " << i;
}

// --- co-occurrence ----------------------------------------------------------

TEST(Cooccurrence, WorkedExample) {
  // i=0, j=1, u=2, v=3, w=4
  TemporalGraph g(5, {{0, 2, 1}, {0, 3, 2}, {0, 4, 3}, {1, 3, 4}, {1, 2, 5}, {1, 3, 6}, {1, 3, 7}});
  auto si = build_node_sequence(g, 0, 1, 10.0, 32);
  auto sj = build_node_sequence(g, 1, 0, 10.0, 32);
  auto [ci, cj] = cooccurrence_counts(si, sj);
  using Row = std::array<double, 2>;
  EXPECT_EQ(ci.rows, (std::vector<Row>{{1, 1}, {1, 3}, {1, 0}, {1, 0}}));
  EXPECT_EQ(cj.rows, (std::vector<Row>{{1, 3}, {1, 1}, {1, 3}, {1, 3}, {0, 1}}));
}

TEST(Cooccurrence, DisjointHistories) {
  TemporalGraph g(6, {{0, 2, 1}, {0, 3, 2}, {1, 4, 3}, {1, 5, 4}});
  auto si = build_node_sequence(g, 0, 1, 9.0, 32);
  auto sj = build_node_sequence(g, 1, 0, 9.0, 32);
  auto [ci, cj] = cooccurrence_counts(si, sj);
  ASSERT_EQ(ci.rows.size(), 3u);
  for (std::size_t r = 0; r + 1 < ci.rows.size(); ++r) EXPECT_EQ(ci.rows[r][1], 0.0);
  EXPECT_EQ(ci.rows.back()[1], static_cast<double>(std::count(sj.neighbors.begin(), sj.neighbors.end(), 1u)));
}

TEST(Cooccurrence, MatchesBruteForceCounts) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<NodeId> node(0, 6);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  for (int trial = 0; trial < 500; ++trial) {
    NodeSequence a, b;
    for (std::size_t n = len(rng); n > 0; --n) a.neighbors.push_back(node(rng));
    for (std::size_t n = len(rng); n > 0; --n) b.neighbors.push_back(node(rng));
    auto [ca, cb] = cooccurrence_counts(a, b);
    auto count = [](const NodeSequence& s, NodeId v) {
      double c = 0;
      for (auto x : s.neighbors) c += x == v;
      return c;
    };
    ASSERT_EQ(ca.rows.size(), a.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
      EXPECT_EQ(ca.rows[r][0], count(a, a.neighbors[r]));
      EXPECT_EQ(ca.rows[r][1], count(b, a.neighbors[r]));
    }
    for (std::size_t r = 0; r < b.size(); ++r) {
      EXPECT_EQ(cb.rows[r][0], count(a, b.neighbors[r]));
      EXPECT_EQ(cb.rows[r][1], count(b, b.neighbors[r]));
    }
  }
}

// --- sequences and patching ---------------------------------------------------

TEST(NodeSequence, TargetRowLastAndBudgetTruncates) {
  TemporalGraph g(3, {{0, 1, 1}, {0, 2, 2}, {2, 0, 3}, {0, 1, 4}, {0, 2, 9}});
  auto s = build_node_sequence(g, 0, 1, 5.0, 3);
  EXPECT_EQ(s.neighbors, (std::vector<NodeId>{2, 1, 1}));
  EXPECT_EQ(s.times, (std::vector<double>{3, 4, 5}));
  EXPECT_FALSE(s.edge_ids.back().has_value());
  auto empty = build_node_sequence(g, 1, 0, 0.5, 32);
  EXPECT_EQ(empty.size(), 1u);
}

TEST(Patching, ShapesAndPadding) {
  std::vector<double> v(15);
  for (std::size_t i = 0; i < 15; ++i) v[i] = static_cast<double>(i + 1);
  auto x = Tensor::from({5, 3}, v);
  auto p = patch_segments(x, {0, 5}, 2);
  EXPECT_EQ(p.rows.shape(), (Shape{3, 6}));
  EXPECT_EQ(p.offsets, (Offsets{0, 3}));
  for (std::size_t j = 3; j < 6; ++j) EXPECT_EQ(p.rows(2, j), 0.0);
  EXPECT_EQ(p.rows(2, 0), 13.0);
  auto same = patch_segments(x, {0, 2, 5}, 1);
  expect_same(same.rows, x);
}

TEST(Patching, RoundTripsThroughUnpatch) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> len(1, 9), psize(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t la = len(rng), lb = len(rng), p = psize(rng), d = 2;
    Rng r(trial);
    auto x = Tensor::zeros({la + lb, d});
    randomize(x, r);
    auto patched = patch_segments(x, {0, la, la + lb}, p);
    const auto ref = reference::vcat({reference::patch(reference::rows_of(reference::of(x), 0, la), p),
                                      reference::patch(reference::rows_of(reference::of(x), la, la + lb), p)});
    ASSERT_EQ(patched.rows.numel(), ref.v.size());
    for (std::size_t i = 0; i < ref.v.size(); ++i) EXPECT_EQ(patched.rows.data()[i], ref.v[i]);
    // unpatch: row r of segment s lives at patch r / p, slot r % p
    for (std::size_t s = 0; s < 2; ++s) {
      const std::size_t begin = s ? la : 0, end = s ? la + lb : la;
      for (std::size_t row = begin; row < end; ++row)
        for (std::size_t j = 0; j < d; ++j)
          EXPECT_EQ(patched.rows(patched.offsets[s] + (row - begin) / p, ((row - begin) % p) * d + j), x(row, j));
    }
  }
}

TEST(InputSequence, ShapeArithmetic) {
  std::vector<EdgeEvent> ev;
  for (int t = 1; t <= 8; ++t) ev.push_back({0, static_cast<NodeId>(1 + t % 3), static_cast<double>(t)});
  TemporalGraph g(4, ev);
  ModelConfig c = small_config(Architecture::dygformer, g);
  c.channel_dim = 50;
  c.time_channel_dim = 0;
  c.patch_size = 4;
  c.max_sequence_length = 32;
  Rng rng(3);
  DygFormerModel m(c, rng);
  auto x = m.input_sequence({0, 1, 10.0}, true, g);
  EXPECT_EQ(x.shape(), (Shape{3, 200}));
  auto lone = m.input_sequence({3, 0, 0.5}, true, g);
  EXPECT_EQ(lone.shape(), (Shape{1, 200}));
}

TEST(ModelConfig, TransformerWidthFollowsTimeChannel) {
  ModelConfig c;
  c.channel_dim = 50;
  EXPECT_EQ(c.transformer_dim(), 200u);
  c.time_channel_dim = 2;
  EXPECT_EQ(c.transformer_dim(), 152u);
  c.layers = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Architecture, NamesRoundTrip) {
  for (auto a : {Architecture::tgat, Architecture::dygformer, Architecture::dygformer_separate,
                 Architecture::dygdecoder})
    EXPECT_EQ(parse_architecture(to_string(a)), a);
  EXPECT_THROW(parse_architecture("tgn"), ContractError);
}

// --- TGAT ----------------------------------------------------------------------

class TgatReference : public ::testing::TestWithParam<EncoderFamily> {};

TEST_P(TgatReference, TwoLayerRecursionMatchesHandUnrolled) {
  auto g = toy_graph(4, 14, 3, 2, 5, 10);
  auto c = small_config(Architecture::tgat, g, GetParam());
  Rng rng(6);
  TgatModel m(c, rng);
  fit_if_needed(m.time_encoder());
  std::vector<EdgeEvent> q = {{0, 1, 11.0}, {2, 3, 6.0}, {1, 2, 3.0}, {3, 0, 0.0}};
  auto z = m.embed(q, g, kEval);
  for (std::size_t b = 0; b < q.size(); ++b) {
    expect_rows(z.src, b, reference::tgat(m, g, q[b].src, q[b].time, 2, c.neighbors), 1e-10);
    expect_rows(z.dst, b, reference::tgat(m, g, q[b].dst, q[b].time, 2, c.neighbors), 1e-10);
  }
}

INSTANTIATE_TEST_SUITE_P(Families, TgatReference,
                         ::testing::Values(EncoderFamily::linear, EncoderFamily::sinusoidal_cos,
                                           EncoderFamily::sinusoidal_pair, EncoderFamily::positional_sinusoidal));

TEST(Tgat, IsolatedNodeUsesZeroMessage) {
  auto g = toy_graph(4, 6, 3, 2, 7);
  auto c = small_config(Architecture::tgat, g);
  c.layers = 1;
  Rng rng(8);
  TgatModel m(c, rng);
  const NodeTime q[] = {{2, 0.0}};
  auto out = m.embed_nodes(q, 1, g, kEval);
  auto& L = m.layers()[0];
  const auto x = reference::row(reference::node_features(g, 2));
  const auto want = reference::linear(
      reference::map(reference::linear(reference::hcat({reference::Mat(1, L.attn_dim), x}), L.merge_hidden),
                     reference::relu),
      L.merge_out);
  expect_rows(out, 0, want.v, 1e-14);
}

TEST(Tgat, DuplicateNeighborRowsSplitAttentionEvenly) {
  FeatureTable ef1{1, {0.7}}, ef2{1, {0.7, 0.7}};
  FeatureTable nf{2, {0.1, 0.2, -0.3, 0.4, 1.0, 1.0}};
  TemporalGraph one(3, {{0, 1, 2.0}}, ef1, nf);
  TemporalGraph two(3, {{0, 1, 2.0}, {0, 1, 2.0}}, ef2, nf);
  auto c = small_config(Architecture::tgat, one);
  c.layers = 1;
  Rng rng(9);
  TgatModel m(c, rng);
  const NodeTime q[] = {{0, 5.0}};
  auto a = m.embed_nodes(q, 1, one, kEval);
  auto b = m.embed_nodes(q, 1, two, kEval);
  for (std::size_t j = 0; j < a.cols(); ++j) EXPECT_NEAR(a(0, j), b(0, j), 1e-14);
}

TEST(Tgat, RejectsMismatchedGraph) {
  auto g = toy_graph(4, 6, 3, 2, 7);
  auto c = small_config(Architecture::tgat, g);
  Rng rng(1);
  TgatModel m(c, rng);
  auto other = toy_graph(4, 6, 2, 2, 7);
  const EdgeEvent e[] = {{0, 1, 3.0}};
  EXPECT_THROW(m.embed(e, other, kEval), DimensionError);
}

// --- DyGFormer family -------------------------------------------------------------

struct DygCase {
  Architecture arch;
  EncoderFamily family;
};

class DygReference : public ::testing::TestWithParam<DygCase> {};

TEST_P(DygReference, ForwardMatchesHandUnrolled) {
  auto g = toy_graph(5, 18, 3, 2, 10, 12);
  auto c = small_config(GetParam().arch, g, GetParam().family);
  Rng rng(11);
  DygFormerModel m(c, rng);
  fit_if_needed(m.time_encoder());
  if (m.bos().defined()) randomize(m.bos(), rng);
  std::vector<EdgeEvent> q = {{0, 1, 13.0}, {2, 2, 7.0}, {3, 4, 0.0}, {4, 0, 9.5}};
  auto z = m.embed(q, g, kEval);
  for (std::size_t b = 0; b < q.size(); ++b) {
    auto [zi, zj] = reference::dygformer(m, c.architecture, g, q[b], c.max_sequence_length, c.patch_size);
    expect_rows(z.src, b, zi, 1e-10);
    expect_rows(z.dst, b, zj, 1e-10);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Variants, DygReference,
    ::testing::Values(DygCase{Architecture::dygformer, EncoderFamily::sinusoidal_cos},
                      DygCase{Architecture::dygformer, EncoderFamily::linear},
                      DygCase{Architecture::dygformer_separate, EncoderFamily::sinusoidal_scale},
                      DygCase{Architecture::dygformer_separate, EncoderFamily::positional_sinusoidal},
                      DygCase{Architecture::dygdecoder, EncoderFamily::linear},
                      DygCase{Architecture::dygdecoder, EncoderFamily::sinusoidal_pair}));

TEST(DygFormer, JointAndSeparateCoincideForLoneTargetRows) {
  Rng feat(1);
  TemporalGraph g(4, {{2, 3, 1.0}, {3, 2, 2.0}}, random_table(2, 2, feat));
  auto cj = small_config(Architecture::dygformer, g);
  auto cs = small_config(Architecture::dygformer_separate, g);
  Rng r1(12), r2(12);
  DygFormerModel joint(cj, r1), sep(cs, r2);
  const EdgeEvent e[] = {{0, 1, 5.0}, {1, 0, 3.0}};
  auto a = joint.embed(e, g, kEval);
  auto b = sep.embed(e, g, kEval);
  expect_same(a.src, b.src);
  expect_same(a.dst, b.dst);
}

TEST(DygFormer, SwappingEndpointsSwapsOutputs) {
  auto g = toy_graph(5, 18, 3, 2, 13);
  for (auto arch : {Architecture::dygformer, Architecture::dygformer_separate, Architecture::dygdecoder}) {
    auto c = small_config(arch, g);
    Rng rng(14);
    DygFormerModel m(c, rng);
    const EdgeEvent fwd[] = {{0, 3, 15.0}};
    const EdgeEvent bwd[] = {{3, 0, 15.0}};
    auto a = m.embed(fwd, g, kEval);
    auto b = m.embed(bwd, g, kEval);
    for (std::size_t j = 0; j < a.src.cols(); ++j) {
      EXPECT_NEAR(a.src(0, j), b.dst(0, j), 1e-12);
      EXPECT_NEAR(a.dst(0, j), b.src(0, j), 1e-12);
    }
  }
}

TEST(DygFormer, ZeroAttentionLeavesResidualPath) {
  auto g = toy_graph(5, 12, 3, 2, 15);
  auto c = small_config(Architecture::dygformer, g);
  c.layers = 1;
  Rng rng(16);
  DygFormerModel m(c, rng);
  auto& layer = m.transformer()[0];
  zero(layer.value().weight());
  const EdgeEvent e[] = {{1, 2, 18.0}};
  auto z = m.embed(e, g, kEval);
  for (bool src : {true, false}) {
    const auto x = reference::of(m.input_sequence(e[0], src, g));
    const auto y = reference::linear(
        reference::map(reference::linear(reference::layer_norm(x, layer.ffn_norm()), layer.ffn_in()),
                       reference::gelu),
        layer.ffn_out());
    const auto pooled = reference::linear(reference::mean_rows(reference::plus(x, y)), m.output());
    expect_rows(src ? z.src : z.dst, 0, pooled.v, 1e-12);
  }
}

TEST(DygFormer, SeparateIgnoresOtherHistoryWhenCooccurrenceFrozen) {
  auto g = toy_graph(8, 10, 3, 2, 17, 10);
  auto c = small_config(Architecture::dygformer_separate, g);
  Rng rng(18);
  DygFormerModel m(c, rng);
  zero(m.cooccurrence_out().weight());
  zero(m.cooccurrence_out().bias());
  const EdgeEvent e[] = {{0, 1, 12.0}};
  auto base = m.embed(e, g, kEval);
  auto perturbed = with_extra_edges(g, {{1, 6, 11.0}, {7, 1, 11.5}}, 19);
  auto z = m.embed(e, perturbed, kEval);
  expect_same(base.src, z.src);
  bool dst_changed = false;
  for (std::size_t j = 0; j < z.dst.cols(); ++j) dst_changed |= z.dst(0, j) != base.dst(0, j);
  EXPECT_TRUE(dst_changed);
}

TEST(DygDecoder, EmptyHistoryIsBosPlusTarget) {
  TemporalGraph g(3, {{1, 2, 1.0}});
  auto c = small_config(Architecture::dygdecoder, g);
  Rng rng(20);
  DygFormerModel m(c, rng);
  const EdgeEvent e[] = {{0, 1, 0.5}};
  AttentionCapture cap;
  auto z = m.embed(e, g, kEval, &cap);
  for (double v : z.src.data()) EXPECT_TRUE(std::isfinite(v));
  ASSERT_EQ(cap.sequences.size(), 2u);
  const auto& s = cap.sequences[0];
  EXPECT_TRUE(s.source);
  EXPECT_TRUE(s.has_bos);
  EXPECT_EQ(s.map.queries, 2u);
  EXPECT_EQ(s.map.keys, 2u);
  EXPECT_EQ(s.map.at(0, 1), 0.0);
  EXPECT_NEAR(s.map.at(1, 0) + s.map.at(1, 1), 1.0, 1e-15);
}

TEST(DygDecoder, FinalRowCoversEveryEarlierPosition) {
  auto g = toy_graph(5, 20, 3, 2, 21);
  auto c = small_config(Architecture::dygdecoder, g);
  c.patch_size = 1;
  Rng rng(22);
  DygFormerModel m(c, rng);
  const EdgeEvent e[] = {{0, 1, 21.0}};
  AttentionCapture cap;
  m.embed(e, g, kEval, &cap);
  for (const auto& s : cap.sequences) {
    ASSERT_EQ(s.position_times.size(), s.map.keys);
    const std::size_t last = s.map.queries - 1;
    for (std::size_t k = 0; k < s.map.keys; ++k) EXPECT_GT(s.map.at(last, k), 0.0);
    for (std::size_t q = 0; q < s.map.queries; ++q)
      for (std::size_t k = q + 1; k < s.map.keys; ++k) EXPECT_EQ(s.map.at(q, k), 0.0);
    EXPECT_TRUE(std::isnan(s.position_times[0]));
    EXPECT_EQ(s.position_times.back(), 21.0);
  }
}

TEST(DygFormer, JointCaptureIsRejected) {
  auto g = toy_graph(4, 6, 0, 0, 2);
  auto c = small_config(Architecture::dygformer, g);
  Rng rng(1);
  DygFormerModel m(c, rng);
  const EdgeEvent e[] = {{0, 1, 3.0}};
  AttentionCapture cap;
  EXPECT_THROW(m.embed(e, g, kEval, &cap), ContractError);
}

// --- invariants over every architecture --------------------------------------------

class AllArchitectures : public ::testing::TestWithParam<Architecture> {};

TEST_P(AllArchitectures, FutureCanariesChangeNoOutputBit) {
  auto g = toy_graph(6, 25, 3, 2, 23, 20);
  auto c = small_config(GetParam(), g, EncoderFamily::linear);
  Rng rng(24);
  LinkPredictor model(c, rng);
  fit_if_needed(model.embedder().time_encoder());
  std::vector<EdgeEvent> q = {{0, 1, 10.0}, {2, 3, 10.0}, {4, 5, 14.0}, {1, 4, 3.0}};
  for (const auto& e : q) {
    std::span<const EdgeEvent> one(&e, 1);
    const auto base = model.logits(one, g, kEval);
    std::vector<EdgeEvent> canaries;
    for (double dt : {0.0, 0.5, 7.0}) {
      canaries.push_back({e.src, e.dst, e.time + dt});
      canaries.push_back({e.dst, static_cast<NodeId>((e.src + 1) % 6), e.time + dt});
    }
    // every node, including the queried nodes' neighbors, receives a future edge
    for (NodeId v = 0; v < 6; ++v) canaries.push_back({v, static_cast<NodeId>((v + 2) % 6), e.time});
    auto poisoned = with_extra_edges(g, canaries, 25);
    expect_same(base, model.logits(one, poisoned, kEval));
  }
}

TEST_P(AllArchitectures, EndToEndGradientsMatchFiniteDifferences) {
  auto g = GetParam() == Architecture::tgat ? toy_graph(4, 10, 2, 2, 26, 8) : toy_graph(5, 14, 2, 2, 26, 8);
  auto c = small_config(GetParam(), g, EncoderFamily::linear);
  c.max_sequence_length = 5;
  Rng rng(27);
  LinkPredictor model(c, rng);
  fit_if_needed(model.embedder().time_encoder());
  if (GetParam() == Architecture::dygdecoder) {
    randomize(static_cast<DygFormerModel&>(model.embedder()).bos(), rng);
  }
  // zero-initialized biases put every zero co-occurrence count on the ReLU kink
  const auto params = model.parameters();
  for (const auto& p : params.entries()) {
    Tensor t = p.tensor;
    if (p.name == "cooccurrence.hidden.bias") randomize(t, rng);
  }
  std::vector<EdgeEvent> q = {{0, 1, 9.0}, {2, 3, 6.0}, {3, 0, 9.0}, {1, 2, 4.0}};
  const std::vector<double> labels = {1, 0, 1, 0};
  auto loss = [&] { return bce_with_logits(model.logits(q, g, kEval), labels); };
  auto r = testing::check_gradients(loss, model.parameters().tensors());
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_GT(r.entries, 100u);
}

TEST_P(AllArchitectures, TimeShiftLeavesScoresUnchanged) {
  auto g = toy_graph(6, 25, 3, 2, 28, 20);
  std::vector<EdgeEvent> shifted_edges = g.edges();
  for (auto& e : shifted_edges) e.time += 1024.0;
  FeatureTable ef{g.edge_feature_dim(), {}}, nf{g.node_feature_dim(), {}};
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    auto f = g.edge_feature(e);
    ef.values.insert(ef.values.end(), f.begin(), f.end());
  }
  for (NodeId v = 0; v < 6; ++v) {
    auto f = g.node_feature(v);
    nf.values.insert(nf.values.end(), f.begin(), f.end());
  }
  TemporalGraph shifted(6, shifted_edges, ef, nf);
  auto c = small_config(GetParam(), g, EncoderFamily::linear);
  Rng rng(29);
  LinkPredictor model(c, rng);
  fit_if_needed(model.embedder().time_encoder());
  std::vector<EdgeEvent> q, qs;
  for (NodeId u = 0; u < 6; ++u)
    for (NodeId v = 0; v < 6; ++v) {
      q.push_back({u, v, 15.0});
      qs.push_back({u, v, 15.0 + 1024.0});
    }
  auto a = model.logits(q, g, kEval);
  auto b = model.logits(qs, shifted, kEval);
  expect_same(a, b);
}

TEST_P(AllArchitectures, BatchScoringEqualsPerEdgeScoring) {
  auto g = toy_graph(6, 25, 3, 2, 30, 20);
  auto c = small_config(GetParam(), g);
  Rng rng(31);
  LinkPredictor model(c, rng);
  std::vector<EdgeEvent> q = {{0, 1, 10.0}, {2, 3, 12.0}, {4, 5, 14.0}, {5, 5, 21.0}};
  auto batch = model.logits(q, g, kEval);
  for (std::size_t b = 0; b < q.size(); ++b) {
    auto one = model.logits(std::span<const EdgeEvent>(&q[b], 1), g, kEval);
    EXPECT_NEAR(batch.data()[b], one.item(), 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(Models, AllArchitectures,
                         ::testing::Values(Architecture::tgat, Architecture::dygformer,
                                           Architecture::dygformer_separate, Architecture::dygdecoder));

// --- head and parameter counts ------------------------------------------------------

TEST(LinkHead, ZeroWeightsGiveHalfProbability) {
  Rng rng(32);
  LinkHead head(3, rng);
  zero(head.hidden().weight());
  zero(head.hidden().bias());
  zero(head.out().weight());
  zero(head.out().bias());
  auto logit = head(Tensor::full({1, 3}, 2.0), Tensor::full({1, 3}, -1.0));
  EXPECT_EQ(logit.item(), 0.0);
  EXPECT_EQ(sigmoid(logit.item()), 0.5);
}

TEST(LinkHead, GradientsMatchFiniteDifferences) {
  Rng rng(33);
  LinkHead head(4, rng);
  auto a = Tensor::zeros({3, 4}, true), b = Tensor::zeros({3, 4}, true);
  randomize(a, rng, 1.0);
  randomize(b, rng, 1.0);
  ParameterList params;
  head.register_into(params);
  auto tensors = params.tensors();
  tensors.push_back(a);
  tensors.push_back(b);
  const std::vector<double> y = {1, 0, 1};
  auto loss = [&] { return bce_with_logits(head(a, b), y); };
  EXPECT_LT(testing::check_gradients(loss, tensors).max_rel_error, 1e-4);
}

// Closed-form TGAT width arithmetic with node/edge widths dv/de, L layers of
// embed width d, merge width h, time width tw and auto attention widths.
std::size_t tgat_count(std::size_t dv, std::size_t de, std::size_t d, std::size_t h, std::size_t layers,
                       std::size_t tw, std::size_t encoder_params) {
  std::size_t total = encoder_params;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? dv : d;
    const std::size_t attn = in + tw;
    total += (in + tw) * attn;           // query
    total += 2 * (in + tw + de) * attn;  // key, value
    total += (attn + dv) * h + h;        // merge hidden
    total += h * d + d;                  // merge out
  }
  return total + (2 * d * d + d) + (d + 1);
}

TEST(ParameterCount, TgatMatchesClosedForm) {
  ModelConfig c;
  c.node_feature_dim = 172;
  c.edge_feature_dim = 172;
  c.embed_dim = 172;
  c.mlp_dim = 172;
  c.layers = 2;
  Rng rng(34);
  c.time_encoder = {EncoderFamily::sinusoidal_cos, 100};
  auto sin = count_parameters(LinkPredictor(c, rng));
  c.time_encoder = {EncoderFamily::linear, 2};
  auto lin = count_parameters(LinkPredictor(c, rng));
  const auto want_sin = tgat_count(172, 172, 172, 172, 2, 100, 200);
  const auto want_lin = tgat_count(172, 172, 172, 172, 2, 2, 4);
  EXPECT_EQ(sin.total, want_sin);
  EXPECT_EQ(lin.total, want_lin);
  EXPECT_EQ(sin.total, 903345u);
  EXPECT_EQ(lin.total, 539765u);
  EXPECT_EQ(sin.by_group.at(ParamGroup::time_encoder), 200u);
  EXPECT_EQ(lin.by_group.at(ParamGroup::time_encoder), 4u);
  std::size_t sum = 0;
  for (const auto& [group, n] : sin.by_group) sum += n;
  EXPECT_EQ(sum, sin.total);
}

TEST(ParameterCount, DygFormerMatchesClosedForm) {
  ModelConfig c;
  c.architecture = Architecture::dygformer;
  c.node_feature_dim = 7;
  c.edge_feature_dim = 5;
  c.channel_dim = 6;
  c.time_channel_dim = 2;
  c.cooccurrence_dim = 4;
  c.patch_size = 3;
  c.layers = 2;
  c.out_dim = 9;
  c.time_encoder = {EncoderFamily::sinusoidal_cos, 10};
  Rng rng(35);
  auto got = count_parameters(LinkPredictor(c, rng));
  const std::size_t dh = 3 * 6 + 2, p = 3;
  std::size_t want = 20;                                   // encoder
  want += (1 * 4 + 4) + (4 * 4 + 4);                       // f_C
  want += (p * 7 * 6 + 6) + (p * 5 * 6 + 6) + (p * 10 * 2 + 2) + (p * 4 * 6 + 6);
  const std::size_t layer = 2 * dh + 3 * dh * dh + 2 * dh + (dh * 4 * dh + 4 * dh) + (4 * dh * dh + dh);
  want += 2 * layer + (dh * 9 + 9) + (2 * 9 * 9 + 9) + (9 + 1);
  EXPECT_EQ(got.total, want);
  c.architecture = Architecture::dygdecoder;
  EXPECT_EQ(count_parameters(LinkPredictor(c, rng)).total, want + dh);
}

}  // namespace
}  // namespace tempora
