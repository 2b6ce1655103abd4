#include <benchmark/benchmark.h>

#include <random>

#include "tempora/config.hpp"
#include "tempora/models.hpp"
#include "tempora/ops.hpp"

namespace {

using namespace tempora;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> n;
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return Tensor::from({r, c}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  auto a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_SegmentedAttention(benchmark::State& state) {
  const std::size_t segments = 200, len = static_cast<std::size_t>(state.range(0)), dim = 64;
  Rng rng(2);
  auto q = random_matrix(segments * len, dim, rng);
  AttentionLayout layout;
  for (std::size_t s = 0; s <= segments; ++s) layout.query_offsets.push_back(s * len);
  layout.key_offsets = layout.query_offsets;
  layout.causal = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(segmented_attention(q, q, q, layout, 0.125));
}
BENCHMARK(BM_SegmentedAttention)->ArgsProduct({{8, 32}, {0, 1}});

void BM_TgatBatch(benchmark::State& state) {
  ToyGraphConfig toy;
  toy.nodes = 500;
  toy.edges = 20000;
  toy.edge_feature_dim = 4;
  const auto graph = generate_toy_graph(toy);
  ModelConfig cfg;
  cfg.layers = static_cast<std::size_t>(state.range(0));
  cfg.neighbors = 10;
  cfg.time_encoder = {state.range(1) ? EncoderFamily::sinusoidal_cos : EncoderFamily::linear,
                      static_cast<std::size_t>(state.range(1) ? 100 : 2)};
  cfg.edge_feature_dim = 4;
  Rng rng(3);
  LinkPredictor model(cfg, rng);
  model.embedder().time_encoder().set_standardizer({10.0, 10.0});
  std::span<const EdgeEvent> batch(graph.edges().data() + 15000, 200);
  for (auto _ : state) {
    Tensor logits = model.logits(batch, graph, ForwardContext{});
    benchmark::DoNotOptimize(logits);
  }
}
BENCHMARK(BM_TgatBatch)->ArgsProduct({{1, 2}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
