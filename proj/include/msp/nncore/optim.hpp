#pragma once

#include <cstdint>
#include <vector>

#include "msp/nncore/layers.hpp"

namespace msp::nn {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::uint64_t step_count = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  /// Sizes the moment buffers to match `params` (zeros).
  void init(const ParameterStore& params);
};

/// One bias-corrected Adam update over every parameter, then zeroes grads.
///
/// All gradients are checked before anything moves; a non-finite entry leaves
/// parameters and state untouched and raises NonFiniteError naming the
/// parameter.
void adam_step(ParameterStore& params, AdamState& state, double lr);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& params, double max_norm);

/// Linear warmup to `peak` over `warmup` steps, then peak * sqrt(warmup / step).
struct WarmupInverseSqrt {
  double peak = 1e-3;
  std::uint64_t warmup = 200;

  /// Learning rate for a 1-based step index.
  double at(std::uint64_t step) const;
};

}  // namespace msp::nn
