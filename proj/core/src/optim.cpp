#include "tempora/optim.hpp"

#include <cmath>

#include "tempora/errors.hpp"

namespace tempora {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)) {
  if (!(options.lr > 0.0)) throw ContractError("Adam learning rate must be positive");
  state_.options = options;
  for (const auto& p : params_) {
    state_.first_moment.emplace_back(p.numel(), 0.0);
    state_.second_moment.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  const auto& o = state_.options;
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto value = p.mutable_data();
    auto grad = p.has_grad() ? p.grad() : std::span<const double>();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      value[j] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace tempora
