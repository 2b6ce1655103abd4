#include "tempora/transformer.hpp"

#include <cmath>

#include "tempora/errors.hpp"

namespace tempora {

Tensor ForwardContext::drop(const Tensor& x) const {
  if (!training || dropout <= 0.0) return x;
  if (!rng) throw ContractError("dropout during training needs a generator");
  return tempora::dropout(x, dropout, *rng, training);
}

TransformerLayer::TransformerLayer(std::size_t dim, Rng& rng, std::size_t ffn_multiplier)
    : dim_(dim),
      ln_attn_(dim),
      wq_(dim, dim, false, rng),
      wk_(dim, dim, false, rng),
      wv_(dim, dim, false, rng),
      ln_ffn_(dim),
      ff1_(dim, ffn_multiplier * dim, true, rng),
      ff2_(ffn_multiplier * dim, dim, true, rng) {}

Tensor TransformerLayer::forward(const Tensor& z, const Offsets& segments, bool causal, const ForwardContext& ctx,
                                 std::vector<AttentionMap>* probe) const {
  if (z.cols() != dim_) throw DimensionError("transformer layer width mismatch");
  Tensor normed = ln_attn_(z);
  AttentionLayout layout{segments, segments, causal};
  Tensor o = segmented_attention(wq_(normed), wk_(normed), wv_(normed), layout,
                                 1.0 / std::sqrt(static_cast<double>(dim_)), probe);
  Tensor h = add(ctx.drop(o), z);
  Tensor y = ff2_(ctx.drop(gelu(ff1_(ln_ffn_(h)))));
  return add(h, ctx.drop(y));
}

void TransformerLayer::register_into(ParameterList& params, const std::string& prefix) const {
  ln_attn_.register_into(params, prefix + ".attn_norm", ParamGroup::attention);
  wq_.register_into(params, prefix + ".query", ParamGroup::attention);
  wk_.register_into(params, prefix + ".key", ParamGroup::attention);
  wv_.register_into(params, prefix + ".value", ParamGroup::attention);
  ln_ffn_.register_into(params, prefix + ".ffn_norm", ParamGroup::mlp);
  ff1_.register_into(params, prefix + ".ffn_in", ParamGroup::mlp);
  ff2_.register_into(params, prefix + ".ffn_out", ParamGroup::mlp);
}

}  // namespace tempora
