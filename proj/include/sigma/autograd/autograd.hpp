#pragma once

// Reverse-mode automatic differentiation over 2-D tensors. Every op records a
// node holding its value, its parents and a closure that pushes the node's
// gradient into the parents. Recording is skipped under NoGradGuard or when
// no input requires a gradient.

#include <functional>
#include <memory>
#include <vector>

#include "sigma/core/tensor.hpp"

namespace sigma::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Gradient storage, zero-initialized on first access.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Var is a shared handle: mutation goes through to the node even from a
  // const handle (optimizer updates, test setup).
  Tensor& mutable_value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() const { return node_->grad_buffer(); }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;
  void zero_grad();

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline Var constant(Tensor value) { return Var(std::move(value), false); }
inline Var parameter(Tensor value) { return Var(std::move(value), true); }

// Creates the result node of an op. `backward` receives the result node and
// must accumulate into the parents that require gradients.
Var record(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward);

// Adds `g` into the parent's gradient if it participates in differentiation.
void accumulate(const std::shared_ptr<Node>& parent, const Tensor& g);

// Value-preserving copy cut from the graph (stop-gradient).
Var detach(const Var& v);

// Propagates d(root)/d(.) into every reachable node; root must be 1x1.
void backward(const Var& root);

}  // namespace sigma::ag
