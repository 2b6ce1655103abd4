#include "tempora/prop1.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tempora/errors.hpp"

namespace tempora {

std::vector<double> Prop1Instance::encode(double dt) const {
  std::vector<double> phi(d_T);
  for (std::size_t i = 0; i < d_T; ++i) phi[i] = w[i] * dt + b[i];
  return phi;
}

std::vector<double> Prop1Instance::project(const std::vector<double>& weights, const Prop1Event& e, double t) const {
  if (e.x.size() != d) throw DimensionError("event feature width differs from the instance");
  std::vector<double> input(e.x);
  auto phi = encode(t - e.time);
  input.insert(input.end(), phi.begin(), phi.end());
  std::vector<double> out(d_h, 0.0);
  for (std::size_t r = 0; r < input.size(); ++r) {
    for (std::size_t c = 0; c < d_h; ++c) out[c] += input[r] * weights[r * d_h + c];
  }
  return out;
}

Prop1Instance construct_prop1(std::size_t d_T, std::size_t d, std::size_t d_h, double w1, double b1, Rng& rng) {
  if (w1 == 0.0) throw ContractError("w1 must be non-zero");
  if (d_T < 2) throw ContractError("d_T must be >= 2");
  if (d_h < 2) throw ContractError("d_h must be >= 2");
  std::normal_distribution<double> normal(0.0, 1.0);
  Prop1Instance inst;
  inst.d_T = d_T;
  inst.d = d;
  inst.d_h = d_h;
  inst.w.resize(d_T);
  inst.b.resize(d_T);
  for (std::size_t i = 0; i < d_T; ++i) {
    inst.w[i] = normal(rng);
    inst.b[i] = normal(rng);
  }
  inst.w[0] = w1;
  inst.b[0] = b1;
  inst.w[1] = 0.0;
  inst.b[1] = 1.0;

  const std::size_t rows = d + d_T;
  inst.w_q.resize(rows * d_h);
  inst.w_k.resize(rows * d_h);
  for (auto& v : inst.w_q) v = normal(rng);
  for (auto& v : inst.w_k) v = normal(rng);
  // Columns 0 and 1 read only the two pinned encoder dimensions.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      inst.w_q[r * d_h + c] = 0.0;
      inst.w_k[r * d_h + c] = 0.0;
    }
  }
  inst.w_q[d * d_h + 0] = 1.0;
  inst.w_q[(d + 1) * d_h + 1] = -1.0;
  inst.w_k[d * d_h + 1] = 1.0;
  inst.w_k[(d + 1) * d_h + 0] = 1.0;
  return inst;
}

double verify_factorization(const Prop1Instance& inst, std::span<const Prop1Event> events, double t) {
  if (events.size() < 2) throw ContractError("factorization check needs at least two events");
  std::vector<std::vector<double>> q, k;
  for (const auto& e : events) {
    q.push_back(inst.project(inst.w_q, e, t));
    k.push_back(inst.project(inst.w_k, e, t));
  }
  const double w1 = inst.w[0];
  double worst = 0.0;
  for (std::size_t m = 0; m < events.size(); ++m) {
    for (std::size_t n = 0; n < events.size(); ++n) {
      // Extended-precision sums keep the cancellation of the free columns
      // below the double rounding of the pinned ones.
      long double full = 0.0L, tail = 0.0L;
      for (std::size_t i = 0; i < inst.d_h; ++i) full += static_cast<long double>(q[m][i]) * k[n][i];
      for (std::size_t i = 2; i < inst.d_h; ++i) tail += static_cast<long double>(q[m][i]) * k[n][i];
      const double span_term = static_cast<double>(full - tail);
      worst = std::max(worst, std::abs(span_term + w1 * (events[m].time - events[n].time)));
    }
  }
  return worst;
}

Prop1Sweep run_prop1_sweep(std::size_t instances, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> time_dim(2, 16), feat_dim(0, 8), hidden_dim(2, 16), count(2, 10);
  std::uniform_real_distribution<double> when(0.0, 100.0);
  std::exponential_distribution<double> lag(0.1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Prop1Sweep sweep;
  for (std::size_t i = 0; i < instances; ++i) {
    double w1 = 0.0;
    while (w1 == 0.0) w1 = normal(rng);
    const double b1 = normal(rng);
    const std::size_t d_T = time_dim(rng), d = feat_dim(rng), d_h = hidden_dim(rng);
    auto inst = construct_prop1(d_T, d, d_h, w1, b1, rng);
    std::vector<Prop1Event> events(count(rng));
    double latest = 0.0;
    for (auto& e : events) {
      e.x.resize(d);
      for (auto& v : e.x) v = normal(rng);
      e.time = when(rng);
      latest = std::max(latest, e.time);
    }
    sweep.max_residual = std::max(sweep.max_residual, verify_factorization(inst, events, latest + lag(rng)));
    ++sweep.instances;
  }
  return sweep;
}

}  // namespace tempora
