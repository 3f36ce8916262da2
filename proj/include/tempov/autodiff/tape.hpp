#pragma once

#include <functional>
#include <vector>

#include "tempov/core/matrix.hpp"
#include "tempov/core/param.hpp"

namespace tempov::ad {

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Ops push their output value together
// with a closure that scatters the output gradient into their inputs. With
// recording disabled the tape only holds values (evaluation / teacher passes).
//
// The tape is pinned in memory: closures hold a pointer back to it.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Var out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

  // Leaf bound to a parameter; gradients accumulate straight into p.grad.
  Var param(Param<T>& p) {
    Node n;
    n.external_value = &p.value;
    n.external_grad = &p.grad;
    n.needs_grad = record_ && p.trainable;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // Read-only leaf: never receives gradient.
  Var param(const Param<T>& p) {
    Node n;
    n.external_value = &p.value;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var push(Matrix<T> value, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix<T>& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external_value ? *n.external_value : n.value;
  }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Gradient buffer of v, zero-allocated on first touch.
  Matrix<T>& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.external_grad) return *n.external_grad;
    if (!n.grad_touched) {
      const Matrix<T>& val = value(v);
      n.grad = Matrix<T>(val.rows(), val.cols());
      n.grad_touched = true;
    }
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 for a 1×1 root and runs closures in reverse order.
  void backward(Var root) {
    if (!nodes_[root.id].needs_grad) return;
    grad(root)[0] += T{1};
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.grad_touched) n.backward(Var{id});
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    const Matrix<T>* external_value = nullptr;
    Matrix<T>* external_grad = nullptr;
    bool needs_grad = false;
    bool grad_touched = false;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace tempov::ad
