#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "texton/common.hpp"
#include "texton/rng.hpp"

namespace texton {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

// Dense n-d value with flat row-major storage (NCHW for rank-4 data).
// Tensor is a cheap shared handle: ops return new tensors whose nodes are
// kept alive by the tape closures that reference them during backward.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  struct Node {
    Shape shape;
    ArrayX<S> value;
    ArrayX<S> grad;  // sized like value whenever requires_grad is set
    bool requires_grad = false;
  };

  Tensor() : node_(std::make_shared<Node>()) {
    node_->shape = {0};
    node_->value.resize(0);
  }

  // Uninitialized storage; callers fill value() immediately.
  static Tensor empty(Shape shape) {
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value.resize(texton::numel(t.node_->shape));
    return t;
  }

  static Tensor zeros(Shape shape) {
    Tensor t = empty(std::move(shape));
    t.node_->value.setZero();
    return t;
  }

  static Tensor full(Shape shape, S fill) {
    Tensor t = empty(std::move(shape));
    t.node_->value.setConstant(fill);
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor from_data(Shape shape, const std::vector<S>& data) {
    Tensor t = empty(std::move(shape));
    if (static_cast<Index>(data.size()) != t.numel())
      throw ShapeError("from_data: " + std::to_string(data.size()) +
                       " values for shape " + shape_str(t.shape()));
    for (Index i = 0; i < t.numel(); ++i) t.node_->value[i] = data[static_cast<std::size_t>(i)];
    return t;
  }

  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = empty(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i)
      t.node_->value[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  Index numel() const { return node_->value.size(); }

  ArrayX<S>& value() { return node_->value; }
  const ArrayX<S>& value() const { return node_->value; }
  ArrayX<S>& grad() { return node_->grad; }
  const ArrayX<S>& grad() const { return node_->grad; }

  S item() const {
    if (numel() != 1)
      throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }

  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on && node_->grad.size() != node_->value.size()) {
      node_->grad.resize(node_->value.size());
      node_->grad.setZero();
    }
  }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.setZero();
  }

  // Deep copy of the value; the copy starts without gradient tracking.
  Tensor detached_copy() const {
    Tensor t = empty(shape());
    t.node_->value = node_->value;
    return t;
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Named learnable tensor. The name shows up in gradient-check reports and
// optimizer diagnostics.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> tensor;

  Parameter() = default;
  Parameter(std::string n, Tensor<S> t) : name(std::move(n)), tensor(std::move(t)) {
    tensor.set_requires_grad(true);
  }

  ArrayX<S>& value() { return tensor.value(); }
  const ArrayX<S>& value() const { return tensor.value(); }
  ArrayX<S>& grad() { return tensor.grad(); }
  Index numel() const { return tensor.numel(); }
};

}  // namespace texton
