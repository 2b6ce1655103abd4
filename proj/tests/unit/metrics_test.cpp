#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tempora/errors.hpp"
#include "tempora/metrics.hpp"

namespace tempora {
namespace {

// Precision at every positive, by walking ranks in a stable descending order.
double brute_ap(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  double total = 0.0;
  int hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (y[order[rank]]) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return 100.0 * total / hits;
}

// Fraction of (positive, negative) pairs ordered correctly, ties count one half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return 100.0 * static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(average_precision(std::vector<double>{0.9, 0.8, 0.7}, std::vector<int>{1, 0, 1}),
              100.0 * (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_EQ(average_precision(std::vector<double>{0.9, 0.8, 0.1, 0.0}, std::vector<int>{1, 1, 0, 0}), 100.0);
  for (int n = 1; n <= 20; ++n) {
    std::vector<double> s(n);
    std::vector<int> y(n, 0);
    for (int i = 0; i < n; ++i) s[i] = n - i;
    y[n - 1] = 1;
    EXPECT_NEAR(average_precision(s, y), 100.0 / n, 1e-12);
  }
}

TEST(AveragePrecision, TiesKeepInputOrder) {
  EXPECT_EQ(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 100.0);
  EXPECT_EQ(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}), 50.0);
}

TEST(AveragePrecision, Errors) {
  EXPECT_THROW(average_precision(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), ContractError);
  EXPECT_THROW(average_precision(std::vector<double>{0.1}, std::vector<int>{1, 0}), ContractError);
  EXPECT_THROW(average_precision(std::vector<double>{0.1}, std::vector<int>{2}), ContractError);
}

TEST(RocAuc, Examples) {
  EXPECT_EQ(roc_auc(std::vector<double>{3, 2, 1, 0}, std::vector<int>{1, 1, 0, 0}), 100.0);
  EXPECT_EQ(roc_auc(std::vector<double>{1, 1, 1, 1}, std::vector<int>{1, 0, 1, 0}), 50.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0, 1}, std::vector<int>{1, 0}), 0.0);
  EXPECT_THROW(roc_auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), ContractError);
}

TEST(Metrics, MatchBruteForceExactly) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(2, 60), level(0, 9), bit(0, 1);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = len(rng);
    std::vector<double> s(m);
    std::vector<int> y(m);
    const bool tied = trial % 2 == 0;
    for (int i = 0; i < m; ++i) {
      s[i] = tied ? static_cast<double>(level(rng)) : n(rng);
      y[i] = bit(rng);
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_EQ(average_precision(s, y), brute_ap(s, y)) << "trial " << trial;
    EXPECT_EQ(roc_auc(s, y), pairwise_auc(s, y)) << "trial " << trial;
  }
}

TEST(Metrics, InvariantToMonotoneTransforms) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> bit(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(40), t(40), u(40);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
      s[i] = std::round(4.0 * n(rng)) / 4.0;
      y[i] = bit(rng);
      t[i] = 1.0 / (1.0 + std::exp(-s[i]));
      u[i] = 3.0 * s[i] * s[i] * s[i] + 7.0;
    }
    y[0] = 1;
    y[1] = 0;
    const double ap = average_precision(s, y), auc = roc_auc(s, y);
    EXPECT_EQ(average_precision(t, y), ap);
    EXPECT_EQ(average_precision(u, y), ap);
    EXPECT_EQ(roc_auc(t, y), auc);
    EXPECT_EQ(roc_auc(u, y), auc);
  }
}

}  // namespace
}  // namespace tempora
