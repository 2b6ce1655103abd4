#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tempora/ops.hpp"
#include "tempora/tensor.hpp"

namespace tempora {

enum class ParamGroup { time_encoder, attention, mlp, head, embedding };

std::string_view to_string(ParamGroup group);

struct NamedParameter {
  std::string name;
  ParamGroup group;
  Tensor tensor;
};

// Ordered registry of trainable tensors; insertion order is the checkpoint order.
class ParameterList {
 public:
  void add(std::string name, ParamGroup group, Tensor tensor);
  void append(const ParameterList& other);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t count() const;
  std::map<ParamGroup, std::size_t> count_by_group() const;
  void zero_grad();

 private:
  std::vector<NamedParameter> entries_;
};

// Gaussian fan-in init: N(0, 1/in).
Tensor fan_in_normal(std::size_t in, std::size_t out, Rng& rng);

/// Dense map y = x W (+ b). W is in x out.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng);

  Tensor operator()(const Tensor& x) const;

  void register_into(ParameterList& params, const std::string& prefix, ParamGroup group) const;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  bool has_bias() const { return bias_.defined(); }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma_, beta_); }
  void register_into(ParameterList& params, const std::string& prefix, ParamGroup group) const;

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }

 private:
  Tensor gamma_;
  Tensor beta_;
};

}  // namespace tempora
