#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "pillarmamba/tensor.hpp"

namespace pillarmamba {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::int32_t id = -1;

  const Tensor<Scalar>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Recorded-operation tape for reverse-mode differentiation.
///
/// Each node owns its forward value. Nodes whose parents all lack gradients are
/// recorded without a backward closure, so constant subgraphs cost nothing on backward.
template <typename Scalar>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<Scalar>& out_grad)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value) { return push(std::move(value), false, nullptr, {}); }

  /// Leaf whose gradient is retrievable through grad() after backward().
  Var<Scalar> variable(Tensor<Scalar> value) { return push(std::move(value), recording_, nullptr, {}); }

  /// Leaf bound to a Param; backward() accumulates into param.grad.
  Var<Scalar> param(Param<Scalar>& p) {
    auto v = push(p.value, recording_, nullptr, {});
    nodes_[v.id].param = &p;
    return v;
  }

  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<Scalar>>(parents), std::move(fn));
  }

  Var<Scalar> record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& parents, BackwardFn fn) {
    bool needs = false;
    if (recording_)
      for (const auto& p : parents) needs = needs || requires_grad(p);
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr, {});
  }

  const Tensor<Scalar>& value(Var<Scalar> v) const { return nodes_.at(check(v)).value; }
  bool requires_grad(Var<Scalar> v) const { return nodes_.at(check(v)).requires_grad; }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of v, allocated as zeros on first touch.
  Tensor<Scalar>& grad(Var<Scalar> v) {
    auto& n = nodes_.at(check(v));
    if (n.grad.size() != n.value.size() || !(n.grad.shape() == n.value.shape())) n.grad = Tensor<Scalar>(n.value.shape());
    return n.grad;
  }

  /// Adds g into the gradient of v when v participates in differentiation.
  void accumulate(Var<Scalar> v, const Vector<Scalar>& g) {
    if (!requires_grad(v)) return;
    grad(v).values() += g;
  }

  /// Reverse sweep from a single-element root seeded with 1.
  void backward(Var<Scalar> root) {
    require(value(root).size() == 1, "backward root must be a scalar, got shape " + value(root).shape().str());
    if (!requires_grad(root)) return;
    grad(root)[0] = Scalar(1);
    for (std::int32_t i = root.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) {
        // Move the closure's output gradient out so the closure may touch other nodes freely.
        Tensor<Scalar> g = std::move(n.grad);
        n.backward(*this, g);
        nodes_[static_cast<std::size_t>(i)].grad = std::move(g);
      } else if (n.param != nullptr) {
        n.param->grad.values() += n.grad.values();
      }
    }
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Param<Scalar>* param = nullptr;
  };

  std::size_t check(Var<Scalar> v) const {
    require(v.tape == this && v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size(), "variable not on this tape");
    return static_cast<std::size_t>(v.id);
  }

  Var<Scalar> push(Tensor<Scalar> value, bool needs, BackwardFn fn, Param<Scalar>* param) {
    nodes_.push_back(Node{std::move(value), {}, needs, std::move(fn), param});
    return Var<Scalar>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool recording_ = true;
};

}  // namespace pillarmamba
