#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gram/numerics/tensor.hpp"

namespace gram {

/// A named model weight. The optimizer never writes a Parameter whose
/// `trainable` flag is false, and backward() never accumulates into its grad.
struct Parameter {
  std::string name;
  Tensor value;
  mutable Tensor grad;  // written by backward() through const model references
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() const { grad = Tensor(value.shape()); }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor own;
  Tensor grad;
  const Parameter* param = nullptr;
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  const Tensor& value() const { return param ? param->value : own; }
  /// Gradient slot, allocated on first use.
  Tensor& grad_slot();
};

/// Handle to a value on the autodiff tape.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value(); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  const NodePtr& node() const { return node_; }
  /// Gradient after backward(); zeros if nothing flowed here.
  Tensor grad() const;

 private:
  NodePtr node_;
};

/// Leaf wrapping a constant (never differentiated).
Var constant(Tensor value);
/// Leaf referencing a Parameter; gradients accumulate into `p.grad` only when
/// `p.trainable` is set.
Var param(const Parameter& p);

/// Builds a taped node. `parents` decide whether the result requires grad; the
/// backward closure is dropped when it does not.
Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward,
                const char* op);

/// Adds `g` into the gradient of `v` if it requires one.
void accumulate(const Var& v, const Tensor& g);

/// Disables taping for its lifetime (inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool saved_;
};

bool grad_enabled();

/// Number of nodes currently recorded on this thread's tape.
std::size_t tape_size();
void clear_tape();

/// Reverse sweep from a scalar loss. Populates grads of trainable Parameters
/// reached by the loss and clears the tape.
void backward(const Var& loss);

}  // namespace gram
