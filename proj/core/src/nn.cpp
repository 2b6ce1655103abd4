#include "tempora/nn.hpp"

#include <cmath>

namespace tempora {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::time_encoder: return "time_encoder";
    case ParamGroup::attention: return "attention";
    case ParamGroup::mlp: return "mlp";
    case ParamGroup::head: return "head";
    case ParamGroup::embedding: return "embedding";
  }
  return "unknown";
}

void ParameterList::add(std::string name, ParamGroup group, Tensor tensor) {
  entries_.push_back({std::move(name), group, std::move(tensor)});
}

void ParameterList::append(const ParameterList& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

std::vector<Tensor> ParameterList::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterList::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

std::map<ParamGroup, std::size_t> ParameterList::count_by_group() const {
  std::map<ParamGroup, std::size_t> out;
  for (const auto& e : entries_) out[e.group] += e.tensor.numel();
  return out;
}

void ParameterList::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Tensor fan_in_normal(std::size_t in, std::size_t out, Rng& rng) {
  std::normal_distribution<double> dist(0.0, in ? 1.0 / std::sqrt(static_cast<double>(in)) : 1.0);
  std::vector<double> w(in * out);
  for (auto& x : w) x = dist(rng);
  return Tensor::from({in, out}, std::move(w), true);
}

Linear::Linear(std::size_t in, std::size_t out, bool bias, Rng& rng)
    : in_(in), out_(out), weight_(fan_in_normal(in, out, rng)) {
  if (bias) bias_ = Tensor::zeros({out}, true);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight_);
  return has_bias() ? add_row(y, bias_) : y;
}

void Linear::register_into(ParameterList& params, const std::string& prefix, ParamGroup group) const {
  params.add(prefix + ".weight", group, weight_);
  if (has_bias()) params.add(prefix + ".bias", group, bias_);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gamma_(Tensor::full({dim}, 1.0, true)), beta_(Tensor::zeros({dim}, true)) {}

void LayerNorm::register_into(ParameterList& params, const std::string& prefix, ParamGroup group) const {
  params.add(prefix + ".gamma", group, gamma_);
  params.add(prefix + ".beta", group, beta_);
}

}  // namespace tempora
