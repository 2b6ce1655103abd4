#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tempora/nn.hpp"
#include "tempora/ops.hpp"

namespace tempora {

struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when training with dropout > 0

  Tensor drop(const Tensor& x) const;
};

/// Pre-norm transformer block:
///   H = softmax(LN(Z) Wq (LN(Z) Wk)^T / sqrt(d)) LN(Z) Wv + Z
///   Z' = H + GELU(LN(H) W1 + b1) W2 + b2
/// Attention runs independently within each row segment.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(std::size_t dim, Rng& rng, std::size_t ffn_multiplier = 4);

  Tensor forward(const Tensor& z, const Offsets& segments, bool causal, const ForwardContext& ctx,
                 std::vector<AttentionMap>* probe = nullptr) const;

  void register_into(ParameterList& params, const std::string& prefix) const;

  std::size_t dim() const { return dim_; }
  Linear& query() { return wq_; }
  Linear& key() { return wk_; }
  Linear& value() { return wv_; }
  Linear& ffn_in() { return ff1_; }
  Linear& ffn_out() { return ff2_; }
  LayerNorm& attn_norm() { return ln_attn_; }
  LayerNorm& ffn_norm() { return ln_ffn_; }

 private:
  std::size_t dim_ = 0;
  LayerNorm ln_attn_;
  Linear wq_, wk_, wv_;
  LayerNorm ln_ffn_;
  Linear ff1_, ff2_;
};

}  // namespace tempora
