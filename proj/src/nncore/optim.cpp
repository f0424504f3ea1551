#include "msp/nncore/optim.hpp"

#include <algorithm>
#include <cmath>

#include "msp/common/errors.hpp"

namespace msp::nn {

void AdamState::init(const ParameterStore& params) {
  first_moment.clear();
  second_moment.clear();
  params.for_each([&](const Parameter& p) {
    first_moment.push_back(Tensor::zeros_like(p.value));
    second_moment.push_back(Tensor::zeros_like(p.value));
  });
  step_count = 0;
}

void adam_step(ParameterStore& params, AdamState& state, double lr) {
  if (!(lr > 0.0)) {
    throw ContractError("adam_step: learning rate must be positive");
  }
  if (state.first_moment.size() != params.size()) {
    if (state.step_count != 0 || !state.first_moment.empty()) {
      throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                           " parameters, model has " + std::to_string(params.size()));
    }
    state.init(params);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.grad.same_shape(p.value) || !state.first_moment[i].same_shape(p.value)) {
      throw DimensionError("adam_step: shape mismatch for parameter " + p.name);
    }
    if (!p.grad.all_finite()) {
      throw NonFiniteError("adam_step: non-finite gradient in parameter " + p.name);
    }
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p.value[j] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    p.zero_grad();
  }
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  params.for_each([&](const Parameter& p) {
    for (double g : p.grad.values()) sq += g * g;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    params.for_each([&](Parameter& p) { p.grad *= s; });
  }
  return norm;
}

double WarmupInverseSqrt::at(std::uint64_t step) const {
  const double s = static_cast<double>(std::max<std::uint64_t>(step, 1));
  const double w = static_cast<double>(std::max<std::uint64_t>(warmup, 1));
  return peak * std::min(s / w, std::sqrt(w / s));
}

}  // namespace msp::nn
