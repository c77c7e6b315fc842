// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nsnet/autograd.hpp"

namespace nsnet {

/// Heavy-ball momentum state: one buffer per parameter, in parameter order.
struct OptimizerState {
  std::vector<Array> momentum_buffers;
  double learning_rate = 0.01;
  double momentum = 0.9;

  OptimizerState() = default;
  OptimizerState(std::span<ParamTensor* const> params, double lr, double momentum_);
};

/// buffer <- momentum * buffer + grad; value <- value - lr * buffer; grad <- 0.
void sgd_step(std::span<ParamTensor* const> params, OptimizerState& state);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
};

/// Relative error floor: |a - n| / max(|a|, |n|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares tape gradients of `loss_fn` against central differences with the
/// given step, element by element, for every parameter. `loss_fn` must be a
/// pure function of the parameter values; pass deterministic=false to have the
/// call rejected (a stochastic loss cannot be differenced).
GradCheckReport finite_difference_check(std::span<ParamTensor* const> params,
                                        const std::function<Var(Tape&)>& loss_fn, double step, double tolerance,
                                        bool deterministic = true);

}  // namespace nsnet
