#include "tempora/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "tempora/errors.hpp"

namespace tempora {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

const std::shared_ptr<detail::Node>& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("use of an undefined tensor");
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return checked(node_)->shape; }
std::size_t Tensor::numel() const { return checked(node_)->value.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.size() <= 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::data() const { return checked(node_)->value; }
std::span<double> Tensor::mutable_data() { return checked(node_)->value; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::operator()(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return checked(node_)->requires_grad; }
bool Tensor::has_grad() const { return !checked(node_)->grad.empty(); }
std::span<const double> Tensor::grad() const { return checked(node_)->grad; }
std::span<double> Tensor::mutable_grad() { return checked(node_)->ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = checked(node_)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const {
  return from(shape(), to_vector(), false);
}

void Tensor::backward() const {
  const auto& root = checked(node_);
  if (root->value.size() != 1) {
    throw ContractError("backward() requires a scalar root, got shape " + shape_string(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS; reversed it is a topological order from the root.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients do not persist between calls; leaves accumulate.
  for (auto* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
  }
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->is_leaf()) node->backward(*node);
  }
}

}  // namespace tempora
