#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tempora/ops.hpp"

namespace tempora {

struct Prop1Event {
  std::vector<double> x;  // node features, length d
  double time = 0.0;
};

// A linear time encoder with attention projections whose first two columns are
// pinned so that the query/key inner product carries -w1 (t_m - t_n) exactly.
// Matrices are row-major (d + d_T) x d_h with input rows [x; Φ].
struct Prop1Instance {
  std::size_t d_T = 2, d = 0, d_h = 2;
  std::vector<double> w, b;  // encoder: Φ_i(Δt) = w_i Δt + b_i
  std::vector<double> w_q, w_k;

  double query_weight(std::size_t row, std::size_t col) const { return w_q[row * d_h + col]; }
  double key_weight(std::size_t row, std::size_t col) const { return w_k[row * d_h + col]; }
  std::vector<double> encode(double dt) const;
  std::vector<double> project(const std::vector<double>& weights, const Prop1Event& e, double t) const;
};

// Free entries ~ N(0, 1). Throws ContractError when w1 == 0, d_T < 2, or d_h < 2.
Prop1Instance construct_prop1(std::size_t d_T, std::size_t d, std::size_t d_h, double w1, double b1, Rng& rng);

// Worst |<q_m, k_n> - sum_{i>=3} q_{m,i} k_{n,i} + w1 (t_m - t_n)| over all
// ordered pairs. Needs at least two events.
double verify_factorization(const Prop1Instance& inst, std::span<const Prop1Event> events, double t);

struct Prop1Sweep {
  std::size_t instances = 0;
  double max_residual = 0.0;
};

// Random instances with d_T in [2, 16], d in [0, 8], d_h in [2, 16], w1 and b1
// ~ N(0, 1), 2..10 events with times in [0, 100) and a later target.
Prop1Sweep run_prop1_sweep(std::size_t instances, std::uint64_t seed);

}  // namespace tempora
