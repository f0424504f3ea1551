#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "msp/nncore/tensor.hpp"

namespace msp::nn {

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Node;
using Var = std::shared_ptr<Node>;

/// Vertex of the reverse-mode tape.
///
/// Result nodes own their value. Parameter leaves alias the parameter's value
/// and accumulate straight into Parameter::grad.
class Node {
 public:
  using Backward = std::function<void(Node&)>;

  explicit Node(Tensor value, bool requires_grad = false);
  explicit Node(Parameter& p);

  const Tensor& value() const noexcept { return param_ ? param_->value : value_; }
  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad();
  bool requires_grad() const noexcept { return requires_grad_; }

  const Var& parent(std::size_t i) const { return parents_[i]; }
  std::size_t parent_count() const noexcept { return parents_.size(); }

 private:
  friend Var make_result(Tensor value, std::vector<Var> parents, Backward backward);
  friend void backward(const Var& root);

  Tensor value_;
  Tensor grad_;
  Parameter* param_ = nullptr;
  std::vector<Var> parents_;
  Backward backward_;
  bool requires_grad_ = false;
};

/// Constant input (never receives a gradient).
Var constant(Tensor t);
/// Free leaf that collects a gradient; used by gradient checks.
Var leaf(Tensor t);
/// Leaf bound to a parameter.
Var param(Parameter& p);

/// Creates an op result. When grad mode is off or no parent needs a gradient,
/// the parents and closure are dropped so no graph is retained.
Var make_result(Tensor value, std::vector<Var> parents, Node::Backward backward);

/// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf.
/// The root must hold exactly one element.
void backward(const Var& root);

bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace msp::nn
