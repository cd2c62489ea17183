#include "safepaint/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace safepaint::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
}

double* Node::grad_data() {
  if (grad.empty()) grad = Tensor(value.shape);
  return grad.data.data();
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return n;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!g_grad_enabled) return n;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  if (!needs) return n;
  n->requires_grad = true;
  n->parents = std::move(parents);
  n->backward_fn = std::move(backward_fn);
  return n;
}

void backward(const Var& root) {
  if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && p->backward_fn && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->accumulate(Tensor(root->value.shape, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (Node* n : order)
    if (n->backward_fn) n->grad = Tensor();
}

Var detach(const Var& v) { return constant(v->value); }

}  // namespace safepaint::nn
