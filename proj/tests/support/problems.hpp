#pragma once

// Small randomized problem instances shared by the unit and acceptance tests.

#include <random>
#include <vector>

#include "depshaper/solver.hpp"

namespace depshaper::testing {

struct SmallShape {
  int particles = 4;
  int electrodes_per_side = 3;
  int time_samples = 4;
  int grid = 16;
  int gh_order = 3;
  double v_max = 2.0;
};

/// Random instance on [-1, 1]^2: particles inside the central half of the
/// domain, Gaussian target, electrodes at pitch 2 / (side + 1).
inline ControlProblem small_problem(std::mt19937_64& rng, const SmallShape& s) {
  ControlProblem p;
  p.domain = {-1.0, 1.0, -1.0, 1.0};
  p.horizon = 1.0;
  p.times = ControlProblem::uniform_times(p.horizon, s.time_samples);
  const double pitch = 2.0 / (s.electrodes_per_side + 1);
  p.array = ElectrodeArray::grid(s.electrodes_per_side, s.electrodes_per_side, pitch, s.v_max);
  p.cap = CapacitanceModel::from_sigma(1.0, pitch, 0.5 * pitch);
  p.consts.sigma = pitch;
  p.consts.gh_order = s.gh_order;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int l = 0; l < s.particles; ++l) p.x0.push_back({u(rng), u(rng)});
  const auto geom = DensityGrid::make(-1.0, 1.0, -1.0, 1.0, s.grid, s.grid);
  p.target = gaussian_target({0.1, -0.1}, 0.3, geom);
  p.bandwidth = silverman_bandwidth(0.3, p.x0.size());
  p.residual_tol = 1e-3;
  p.box_penalty = 10.0;
  return p;
}

/// Perturbs every entry of `params` by a uniform(-scale, scale) amount.
inline void jitter(std::vector<double>& params, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : params) v += u(rng);
}

}  // namespace depshaper::testing
