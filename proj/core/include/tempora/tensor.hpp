#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tempora {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense float64 array with reverse-mode autodiff.
///
/// A Tensor is a cheap handle; copies share the same node. Values are
/// immutable once an operation has consumed them, except through
/// mutable_data() on leaves (used by the optimizer). The computation graph is
/// rebuilt on every forward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // 2-D views; rank-1 tensors read as a single row, scalars as 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator()(std::size_t r, std::size_t c) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Accumulates d(this)/d(leaf) into every requires_grad leaf. `this` must be
  // a scalar. Repeated calls without zero_grad() accumulate.
  void backward() const;

  // Same storage, no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

}  // namespace tempora
