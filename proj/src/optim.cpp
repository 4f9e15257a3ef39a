#include "depshaper/optim.hpp"

#include <algorithm>
#include <cmath>

namespace depshaper {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) throw OptimizerError(i);
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

void DualState::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("DualState: lambda must be nonnegative");
  if (!(alpha > 0.0)) throw std::invalid_argument("DualState: alpha must be positive");
  if (!(eps_tol > 0.0)) throw std::invalid_argument("DualState: eps_tol must be positive");
}

DualState dual_step(const DualState& state, double residual_sum) {
  if (!(residual_sum >= 0.0)) throw std::invalid_argument("dual_step: residual sum must be nonnegative");
  DualState next = state;
  next.lambda = std::max(0.0, state.lambda + state.alpha * (residual_sum - state.eps_tol));
  return next;
}

void project_box(std::span<double> values, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("project_box: lo > hi");
  for (double& v : values) v = std::clamp(v, lo, hi);
}

}  // namespace depshaper
