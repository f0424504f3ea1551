#include "msp/nncore/autograd.hpp"

#include <unordered_set>

#include "msp/common/errors.hpp"

namespace msp::nn {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

Node::Node(Tensor value, bool requires_grad) : value_(std::move(value)), requires_grad_(requires_grad) {}

Node::Node(Parameter& p) : param_(&p), requires_grad_(true) {}

Tensor& Node::grad() {
  if (param_) {
    return param_->grad;
  }
  if (grad_.empty() && !value_.empty()) {
    grad_ = Tensor::zeros_like(value_);
  }
  return grad_;
}

Var constant(Tensor t) { return std::make_shared<Node>(std::move(t), false); }

Var leaf(Tensor t) { return std::make_shared<Node>(std::move(t), true); }

Var param(Parameter& p) { return std::make_shared<Node>(p); }

Var make_result(Tensor value, std::vector<Var> parents, Node::Backward backward) {
  auto node = std::make_shared<Node>(std::move(value), false);
  if (!g_grad_enabled) {
    return node;
  }
  bool needs = false;
  for (const auto& p : parents) {
    needs = needs || (p && p->requires_grad());
  }
  if (needs) {
    node->requires_grad_ = true;
    node->parents_ = std::move(parents);
    node->backward_ = std::move(backward);
  }
  return node;
}

void backward(const Var& root) {
  if (!root || root->value().size() != 1) {
    throw ContractError("backward: root must be a scalar");
  }
  if (!root->requires_grad()) {
    return;
  }
  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents_.size()) {
      Node* p = node->parents_[next++].get();
      if (p && p->requires_grad() && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_ && !n->grad_.empty()) {
      n->backward_(*n);
    }
  }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace msp::nn
