#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace depshaper {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : config(cfg), m(n, 0.0), v(n, 0.0) {}
};

class OptimizerError : public std::runtime_error {
public:
  explicit OptimizerError(std::size_t index)
      : std::runtime_error("non-finite gradient at parameter " + std::to_string(index)), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

/// Bias-corrected Adam update in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Projected multiplier: lambda >= 0 always.
struct DualState {
  double lambda = 0.0;
  double alpha = 1e-3;    // dual step size
  double eps_tol = 1e-4;  // constraint tolerance on the residual sum

  void validate() const;
};

/// lambda <- max(0, lambda + alpha (residual_sum - eps_tol)).
DualState dual_step(const DualState& state, double residual_sum);

void project_box(std::span<double> values, double lo, double hi);
inline double project_box(double value, double lo, double hi) { return value < lo ? lo : (value > hi ? hi : value); }

}  // namespace depshaper
