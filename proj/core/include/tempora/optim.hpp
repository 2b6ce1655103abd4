#pragma once

#include <cstddef>
#include <vector>

#include "tempora/tensor.hpp"

namespace tempora {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  AdamOptions options;
};

/// Adam with bias correction over a fixed parameter set.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

  // Applies one update from the parameters' current gradients. Parameters
  // that have not received a gradient are treated as having a zero one.
  void step();
  void zero_grad();

  const AdamState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace tempora
