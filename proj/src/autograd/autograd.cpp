#include "sigma/autograd/autograd.hpp"

#include <unordered_set>

#include "sigma/core/errors.hpp"

namespace sigma::ag {
namespace {
thread_local bool t_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.rows(), value.cols());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  if (value().size() != 1) throw ShapeMismatch("item() on " + value().shape_string());
  return value()[0];
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var record(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backward) {
  bool any = false;
  if (t_grad_enabled) {
    for (const Var& p : parents) any = any || p.requires_grad();
  }
  if (!any) return Var(std::move(value), false);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (const Var& p : parents) node->parents.push_back(p.shared());
  node->backward_fn = std::move(backward);
  return Var(std::move(node));
}

void accumulate(const std::shared_ptr<Node>& parent, const Tensor& g) {
  if (parent && parent->requires_grad) parent->grad_buffer() += g;
}

Var detach(const Var& v) { return Var(v.value(), false); }

void backward(const Var& root) {
  if (!root.defined()) throw Error("backward on undefined variable");
  if (root.value().size() != 1) {
    throw ShapeMismatch("backward root must be scalar, got " + root.value().shape_string());
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

}  // namespace sigma::ag
