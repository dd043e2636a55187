#pragma once

// Dense reverse-mode differentiable tensors.
//
// A Tensor is a shared handle to a node of a computation graph. Every op
// below creates a fresh node whose backward rule accumulates (+=) into the
// grad slots of its parents. Values are immutable once created; only leaf
// tensors (parameters) are mutated in place by the optimizer.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stnscm {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  // Leaf-only mutation (optimizer steps, finite differences, loading).
  std::span<double> mutable_values() { return node_->value; }
  std::span<double> mutable_grad() { return node_->grad; }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  double grad_at(std::initializer_list<std::size_t> index) const;

  void zero_grad();
  // Seeds d(self)/d(self) = 1 for a single-element tensor and runs the
  // reverse sweep over everything reachable from it.
  void backward() const;
  // Copy of the values with no history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;
  std::shared_ptr<Node> node_;
};

// Broadcasting (numpy rules, right-aligned) elementwise binaries.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// 1 - x, used by gate complements.
Tensor one_minus(const Tensor& x);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

enum class Unary { Tanh, Sigmoid, Relu, Abs, Square };
Tensor apply(Unary kind, const Tensor& x);

// [..., m, k] x [..., k, n] -> [..., m, n]; leading dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x W + b with W: [in, out], b: [out].
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor transpose_last2(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);

// Reduction over one axis; the axis is dropped unless keepdim.
Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor concat_lastdim(const std::vector<Tensor>& xs);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
// slice with the axis removed (length 1).
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
Tensor reshape(const Tensor& x, Shape shape);

// D^-1 A over the last two dims; rows with zero degree stay zero.
Tensor row_normalize(const Tensor& a);

}  // namespace stnscm
