#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "tempora/tensor.hpp"

namespace tempora {

using Rng = std::mt19937_64;

// Row-range boundaries: segment s spans rows [offsets[s], offsets[s+1]).
using Offsets = std::vector<std::size_t>;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a: m x n, bias: n elements (any rank); adds bias to every row.
Tensor add_row(const Tensor& a, const Tensor& bias);

Tensor relu(const Tensor& x);
// Exact form x * Phi(x) with the Gaussian CDF.
Tensor gelu(const Tensor& x);
Tensor cos_elem(const Tensor& x);
Tensor sin_elem(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Numerically stable (max-shifted) softmax along `axis`. NaN inputs propagate.
Tensor softmax(const Tensor& x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;
// Normalizes over the last axis with population variance, then gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);
// [a0 b0 a1 b1 ...] column interleave of two same-shape matrices.
Tensor interleave_cols(const Tensor& a, const Tensor& b);

// Mean of the rows of each segment; empty segments produce zero rows.
Tensor segment_mean(const Tensor& x, const Offsets& offsets);

struct PatchedRows {
  Tensor rows;
  Offsets offsets;
};
// Within each segment, groups P consecutive rows into one row of width P*d.
// The final partial group is zero padded.
PatchedRows patch_segments(const Tensor& x, const Offsets& offsets, std::size_t patch_size);

// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Mean binary cross entropy of logits (any shape) against 0/1 labels, in the
// log-sum-exp form max(z,0) - z*y + log(1 + exp(-|z|)).
Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels);

struct AttentionLayout {
  Offsets query_offsets;
  Offsets key_offsets;
  // Mask keys whose local index exceeds the query's local index. Requires
  // equal query and key segment lengths.
  bool causal = false;
};

struct AttentionMap {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<double> weights;  // queries x keys, row-major

  double at(std::size_t q, std::size_t k) const { return weights[q * keys + k]; }
};

// Scaled dot-product attention computed independently per segment:
// softmax(Q_s K_s^T * scale) V_s. Segments with no keys yield zero rows.
// When `probe` is non-null it receives one AttentionMap per segment.
Tensor segmented_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionLayout& layout, double scale,
                           std::vector<AttentionMap>* probe = nullptr);

double sigmoid(double z);

}  // namespace tempora
