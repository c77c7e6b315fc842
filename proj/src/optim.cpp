// SPDX-License-Identifier: Apache-2.0
#include "nsnet/optim.hpp"

#include <algorithm>
#include <cmath>

#include "nsnet/error.hpp"

namespace nsnet {

OptimizerState::OptimizerState(std::span<ParamTensor* const> params, double lr, double momentum_)
    : learning_rate(lr), momentum(momentum_) {
  require(lr >= 0.0, "learning rate must be nonnegative");
  require(momentum_ >= 0.0 && momentum_ < 1.0, "momentum must lie in [0, 1)");
  momentum_buffers.reserve(params.size());
  for (const auto* p : params) momentum_buffers.emplace_back(p->value.shape());
}

void sgd_step(std::span<ParamTensor* const> params, OptimizerState& state) {
  if (state.momentum_buffers.size() != params.size()) {
    throw ContractError("optimizer holds " + std::to_string(state.momentum_buffers.size()) + " buffers for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamTensor& p = *params[k];
    Array& buf = state.momentum_buffers[k];
    if (buf.shape() != p.value.shape()) throw ShapeError("momentum buffer shape mismatch for " + p.name);
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    for (std::size_t i = 0; i < buf.size(); ++i) {
      buf[i] = state.momentum * buf[i] + p.grad[i];
      p.value[i] -= state.learning_rate * buf[i];
    }
    p.zero_grad();
  }
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradCheckReport finite_difference_check(std::span<ParamTensor* const> params,
                                        const std::function<Var(Tape&)>& loss_fn, double step, double tolerance,
                                        bool deterministic) {
  require(deterministic, "finite_difference_check requires a deterministic loss (dropout disabled)");
  require(step > 0.0, "finite-difference step must be positive");
  GradCheckReport report;
  report.tolerance = tolerance;
  if (params.empty()) return report;

  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn(tape));
  }
  std::vector<Array> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto eval = [&] {
    Tape tape;
    return loss_fn(tape).value()[0];
  };

  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamTensor& p = *params[k];
    GradCheckEntry entry{p.name, 0.0, 0.0};
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = eval();
      p.value[i] = saved - step;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      entry.mean_rel_error += rel;
    }
    if (p.value.size()) entry.mean_rel_error /= static_cast<double>(p.value.size());
    report.entries.push_back(std::move(entry));
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace nsnet
