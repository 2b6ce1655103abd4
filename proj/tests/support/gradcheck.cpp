#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace tempora::testing {

GradCheckResult check_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& params, double h,
                                double floor) {
  for (auto p : params) p.zero_grad();
  loss().backward();
  GradCheckResult result;
  for (auto p : params) {
    const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                      : std::vector<double>(p.numel(), 0.0);
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[i] - numeric) / denom);
      ++result.entries;
    }
  }
  return result;
}

}  // namespace tempora::testing
