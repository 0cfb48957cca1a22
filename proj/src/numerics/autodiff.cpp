#include "gram/numerics/autodiff.hpp"

#include <fmt/format.h>

namespace gram {

namespace {

struct Tape {
  std::vector<NodePtr> nodes;
  bool enabled = true;
};

Tape& tape() {
  thread_local Tape t;
  return t;
}

void add_into(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape()) {
    throw ShapeError(fmt::format("gradient shape {} does not match {}", to_string(src.shape()), to_string(dst.shape())));
  }
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Tensor& Node::grad_slot() {
  if (grad.shape() != value().shape() || grad.size() != value().size()) grad = Tensor(value().shape());
  return grad;
}

Tensor Var::grad() const {
  if (node_->grad.shape() == value().shape() && node_->grad.size() == value().size()) return node_->grad;
  return Tensor(value().shape());
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  return Var(std::move(n));
}

Var param(const Parameter& p) {
  auto n = std::make_shared<Node>();
  n->param = &p;
  n->requires_grad = p.trainable && tape().enabled;
  if (n->requires_grad) tape().nodes.push_back(n);
  return Var(std::move(n));
}

Var make_result(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward,
                const char* op) {
  value.settle(op);
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  if (tape().enabled) {
    for (const auto& p : parents) {
      if (p.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->backward = std::move(backward);
    tape().nodes.push_back(n);
  }
  return Var(std::move(n));
}

void accumulate(const Var& v, const Tensor& g) {
  if (!v.requires_grad()) return;
  add_into(v.node()->grad_slot(), g);
}

NoGradScope::NoGradScope() : saved_(tape().enabled) { tape().enabled = false; }
NoGradScope::~NoGradScope() { tape().enabled = saved_; }

bool grad_enabled() { return tape().enabled; }

std::size_t tape_size() { return tape().nodes.size(); }

void clear_tape() { tape().nodes.clear(); }

void backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw ShapeError(fmt::format("backward() needs a scalar loss, got shape {}", to_string(loss.shape())));
  }
  auto& nodes = tape().nodes;
  if (loss.requires_grad()) {
    loss.node()->grad_slot().fill(1.0);
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
      Node& n = **it;
      if (n.grad.size() != n.value().size()) continue;  // nothing flowed here
      if (n.backward) {
        n.backward(n);
      } else if (n.param != nullptr && n.param->trainable) {
        if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
        add_into(n.param->grad, n.grad);
      }
    }
  }
  nodes.clear();
}

}  // namespace gram
