#include "tempora/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "tempora/errors.hpp"

namespace tempora {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("labels must be 0 or 1");
  }
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0, total = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      hits += 1.0;
      total += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0.0) throw ContractError("average precision needs at least one positive label");
  return 100.0 * total / hits;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the average rank keeps the sum integral, so the result is exact for
  // moderate n.
  long long positives = 0, twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const long long twice_avg = static_cast<long long>(i + 1 + j);  // (i+1) + j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        ++positives;
        twice_rank_sum += twice_avg;
      }
    }
    i = j;
  }
  const long long negatives = static_cast<long long>(n) - positives;
  if (positives == 0 || negatives == 0) throw ContractError("AUC needs both classes");
  // 2U = 2R - P(P+1)
  const long long twice_u = twice_rank_sum - positives * (positives + 1);
  return 100.0 * static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

}  // namespace tempora
