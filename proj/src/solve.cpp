#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "depshaper/solver.hpp"

namespace depshaper {

Vec2d Box::clamp(const Vec2d& p) const noexcept {
  return {std::clamp(p.x1, x1_min, x1_max), std::clamp(p.x2, x2_min, x2_max)};
}

Box Box::enlarged(double factor) const noexcept {
  const double c1 = 0.5 * (x1_min + x1_max), c2 = 0.5 * (x2_min + x2_max);
  const double h1 = 0.5 * factor * (x1_max - x1_min), h2 = 0.5 * factor * (x2_max - x2_min);
  return {c1 - h1, c1 + h1, c2 - h2, c2 + h2};
}

std::vector<double> ControlProblem::uniform_times(double horizon, int count) {
  if (!(horizon > 0.0) || count < 2) throw std::invalid_argument("uniform_times: need horizon > 0 and count >= 2");
  std::vector<double> t(count);
  for (int k = 0; k < count; ++k) t[k] = horizon * k / (count - 1);
  t.back() = horizon;
  return t;
}

void ControlProblem::validate() const {
  if (!(domain.x1_max > domain.x1_min) || !(domain.x2_max > domain.x2_min)) {
    throw std::invalid_argument("ControlProblem: domain bounds must be ordered");
  }
  if (!(horizon > 0.0)) throw std::invalid_argument("ControlProblem: horizon must be positive");
  if (times.size() < 2) throw std::invalid_argument("ControlProblem: need at least two time samples");
  if (times.front() != 0.0) throw std::invalid_argument("ControlProblem: first time sample must be 0");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) {
      throw std::invalid_argument("ControlProblem: time samples must be strictly increasing (index " +
                                  std::to_string(k) + ")");
    }
  }
  if (std::fabs(times.back() - horizon) > 1e-12 * horizon) {
    throw std::invalid_argument("ControlProblem: last time sample must equal the horizon");
  }
  array.validate();
  consts.validate();
  if (x0.empty()) throw std::invalid_argument("ControlProblem: need at least one particle");
  for (std::size_t l = 0; l < x0.size(); ++l) {
    if (!domain.contains(x0[l])) {
      throw std::invalid_argument("ControlProblem: initial position " + std::to_string(l) + " outside the domain");
    }
  }
  target.validate();
  if (target.values.size() != target.size()) throw std::invalid_argument("ControlProblem: target grid has no values");
  if (std::fabs(target.mass() - 1.0) > 0.05) {
    throw std::invalid_argument("ControlProblem: target density integrates to " + std::to_string(target.mass()) +
                                ", expected about 1");
  }
  if (!(bandwidth.h1 > 0.0) || !(bandwidth.h2 > 0.0)) throw std::invalid_argument("ControlProblem: bad bandwidth");
  if (!(residual_tol > 0.0)) throw std::invalid_argument("ControlProblem: residual tolerance must be positive");
  if (!(residual_multiplier > 0.0)) throw std::invalid_argument("ControlProblem: residual multiplier must be positive");
  if (!(box_penalty >= 0.0)) throw std::invalid_argument("ControlProblem: box penalty must be nonnegative");
}

std::string report_to_json(const SolveReport& r, bool include_timing) {
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["status"] = r.status;
  j["iterations"] = r.iterations;
  j["initial_loss_sum"] = r.initial_loss_sum;
  j["final_loss_sum"] = r.final_loss_sum;
  j["initial_mse"] = r.initial_mse;
  j["final_mse"] = r.final_mse;
  j["mse_reduction"] = r.mse_reduction;
  j["final_residual_sum"] = r.final_residual_sum;
  j["mean_residual"] = r.mean_residual;
  j["residual_tol"] = r.residual_tol;
  j["final_lambda"] = r.final_lambda;
  j["min_lambda"] = r.min_lambda;
  if (include_timing) j["wall_time_s"] = r.wall_time_s;
  else j["wall_time_s"] = nullptr;
  auto& pos = j["final_positions"] = nlohmann::ordered_json::array();
  for (const auto& p : r.final_positions) pos.push_back({p.x1, p.x2});
  auto& hist = j["history"];
  hist["iteration"] = nlohmann::ordered_json::array();
  hist["kde_loss"] = nlohmann::ordered_json::array();
  hist["residual_sum"] = nlohmann::ordered_json::array();
  hist["lambda"] = nlohmann::ordered_json::array();
  hist["total"] = nlohmann::ordered_json::array();
  for (const auto& h : r.history) {
    hist["iteration"].push_back(h.iteration);
    hist["kde_loss"].push_back(h.kde);
    hist["residual_sum"].push_back(h.residual_sum);
    hist["lambda"].push_back(h.lambda);
    hist["total"].push_back(h.total);
  }
  auto& g = j["final_kde"];
  g["x1_min"] = r.final_kde.x1_min;
  g["x1_max"] = r.final_kde.x1_max;
  g["x2_min"] = r.final_kde.x2_min;
  g["x2_max"] = r.final_kde.x2_max;
  g["nx1"] = r.final_kde.nx1;
  g["nx2"] = r.final_kde.nx2;
  g["values"] = r.final_kde.values;
  return j.dump(2) + "\n";
}

ContinuousNets make_continuous_nets(const ControlProblem& problem, int hidden_traj, int hidden_vmap,
                                    std::uint64_t seed, double traj_output_scale, double vmap_output_scale) {
  ContinuousNets nets;
  nets.trajectories = TrajectoryBundle::create(problem.x0, hidden_traj, seed, problem.horizon, traj_output_scale);
  auto vmap = PotentialMap::create(hidden_vmap, seed + 7, problem.domain.x1_min, problem.domain.x1_max,
                                   problem.domain.x2_min, problem.domain.x2_max, problem.horizon, problem.array.v_max);
  scale_output_layer(vmap.net(), vmap_output_scale);
  nets.potential = std::make_shared<PotentialMap>(std::move(vmap));
  return nets;
}

namespace {

void check_config(const TrainConfig& c) {
  if (c.max_iterations < 0) throw std::invalid_argument("TrainConfig: max_iterations must be nonnegative");
  if (c.dual_interval < 1) throw std::invalid_argument("TrainConfig: dual_interval must be >= 1");
  if (c.history_stride < 1) throw std::invalid_argument("TrainConfig: history_stride must be >= 1");
  if (!(c.lambda0 >= 0.0)) throw std::invalid_argument("TrainConfig: lambda0 must be nonnegative");
  if (!(c.adam.lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
  if (!(c.residual_warn_factor > 0.0)) throw std::invalid_argument("TrainConfig: warn factor must be positive");
}

bool finite_terms(const LossTerms& t) {
  return std::isfinite(t.total) && std::isfinite(t.kde) && std::isfinite(t.residual_sum) && std::isfinite(t.box);
}

std::string describe(const LossTerms& t) {
  return "kde=" + std::to_string(t.kde) + " residual=" + std::to_string(t.residual_sum) +
         " box=" + std::to_string(t.box);
}

// Shared primal-dual loop.  `eval(params, lambda, grad)` returns the loss
// terms, `project(params)` is applied after every Adam step.
template <class Eval, class Project>
LossTerms primal_dual(std::vector<double>& params, const TrainConfig& config, double residual_sum_tol, Eval&& eval,
                      Project&& project, SolveReport& report) {
  std::vector<double> grad(params.size());
  AdamState adam(params.size(), config.adam);
  DualState dual{config.lambda0, config.alpha, residual_sum_tol};
  dual.validate();
  report.min_lambda = dual.lambda;
  LossTerms terms;
  for (int it = 0; it <= config.max_iterations; ++it) {
    terms = eval(params, dual.lambda, grad);
    if (!finite_terms(terms)) {
      throw SolveError("non-finite loss at iteration " + std::to_string(it) + " (" + describe(terms) + ")", it, terms);
    }
    if (it % config.history_stride == 0 || it == config.max_iterations) {
      report.history.push_back({it, terms.kde, terms.residual_sum, dual.lambda, terms.total});
    }
    if (it == config.max_iterations) break;
    try {
      adam_step(adam, params, grad);
    } catch (const OptimizerError& e) {
      throw SolveError(std::string(e.what()) + " at iteration " + std::to_string(it) + " (" + describe(terms) + ")",
                       it, terms);
    }
    project(params);
    if ((it + 1) % config.dual_interval == 0) {
      dual = dual_step(dual, terms.residual_sum);
      report.min_lambda = std::min(report.min_lambda, dual.lambda);
    }
  }
  report.iterations = config.max_iterations;
  report.final_lambda = dual.lambda;
  return terms;
}

void finish_report(SolveReport& report, const ControlProblem& problem, std::vector<Vec2d> final_positions,
                   const std::vector<Vec2d>& initial_positions, const LossTerms& final_terms, std::size_t points,
                   double warn_factor) {
  for (auto& p : final_positions) p = problem.domain.clamp(p);
  const auto init_kde = kde_evaluate(initial_positions, problem.bandwidth, problem.target);
  const auto init = density_loss_report(init_kde, problem.target);
  report.final_kde = kde_evaluate(final_positions, problem.bandwidth, problem.target);
  const auto fin = density_loss_report(report.final_kde, problem.target);
  report.final_positions = std::move(final_positions);
  report.initial_loss_sum = init.sum;
  report.final_loss_sum = fin.sum;
  report.initial_mse = init.mse;
  report.final_mse = fin.mse;
  report.mse_reduction = init.mse > 0.0 ? 1.0 - fin.mse / init.mse : 0.0;
  report.final_residual_sum = final_terms.residual_sum;
  report.mean_residual = final_terms.residual_sum / static_cast<double>(points);
  report.residual_tol = problem.residual_tol;
  report.status = report.mean_residual <= warn_factor * problem.residual_tol ? "ok" : "residual_warning";
}

}  // namespace

SolveReport solve_continuous(const ControlProblem& problem, ContinuousNets& nets, const TrainConfig& config) {
  check_config(config);
  if (!nets.potential) throw std::invalid_argument("solve_continuous: missing potential map");
  const auto start = std::chrono::steady_clock::now();
  ContinuousObjective obj(problem, nets.trajectories, *nets.potential);
  auto params = obj.pack(nets.trajectories, *nets.potential);
  const std::size_t points = problem.particle_count() * problem.time_count();

  SolveReport report;
  report.mode = "continuous";
  const auto initial = obj.positions(params).back();
  const LossTerms last = primal_dual(
      params, config, problem.residual_tol * static_cast<double>(points),
      [&](const std::vector<double>& p, double lambda, std::vector<double>& g) { return obj.evaluate(p, lambda, g); },
      [](std::vector<double>&) {}, report);
  obj.unpack(params, nets.trajectories, *nets.potential);
  finish_report(report, problem, obj.positions(params).back(), initial, last, points, config.residual_warn_factor);
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

CollocationSolution solve_collocation(const ControlProblem& problem, const TrainConfig& config, std::uint64_t seed,
                                      double potential_init_scale) {
  check_config(config);
  if (problem.particle_count() > 20 || problem.array.size() > 25 || problem.time_count() > 50) {
    throw std::invalid_argument(
        "solve_collocation: instance too large (limit 20 particles, 25 electrodes, 50 time samples)");
  }
  const auto start = std::chrono::steady_clock::now();
  CollocationObjective obj(problem);
  auto params = obj.initial_guess(seed, potential_init_scale);
  const std::size_t points = problem.particle_count() * (problem.time_count() - 1);

  CollocationSolution sol;
  sol.report.mode = "collocation";
  const LossTerms last = primal_dual(
      params, config, problem.residual_tol * static_cast<double>(points),
      [&](const std::vector<double>& p, double lambda, std::vector<double>& g) { return obj.evaluate(p, lambda, g); },
      [&](std::vector<double>& p) { obj.project(p); }, sol.report);
  sol.positions = obj.positions(params);
  sol.potentials = obj.potentials(params);
  finish_report(sol.report, problem, sol.positions.back(), problem.x0, last, points, config.residual_warn_factor);
  sol.report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

// --- rollout -------------------------------------------------------------------------

RolloutResult rollout(const VelocityField& velocity, std::span<const Vec2d> x0, double horizon, int steps,
                      const Box* safety) {
  if (steps < 1 || !(horizon > 0.0)) throw std::invalid_argument("rollout: need steps >= 1 and horizon > 0");
  const auto n = static_cast<std::ptrdiff_t>(x0.size());
  const double dt = horizon / steps;
  RolloutResult r;
  r.times.resize(steps + 1);
  for (int s = 0; s <= steps; ++s) r.times[s] = s * dt;
  r.times.back() = horizon;
  r.positions.assign(steps + 1, std::vector<Vec2d>(n));
  std::vector<char> left(n, 0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t l = 0; l < n; ++l) {
    Vec2d x = x0[l];
    r.positions[0][l] = x;
    for (int s = 0; s < steps; ++s) {
      const double t = r.times[s];
      const Vec2d k1 = velocity(x, t);
      const Vec2d xp = x + dt * k1;
      const Vec2d k2 = velocity(xp, r.times[s + 1]);
      x = x + (0.5 * dt) * (k1 + k2);
      if (safety && !safety->contains(x)) {
        left[l] = 1;
        x = safety->clamp(x);
      }
      r.positions[s + 1][l] = x;
    }
  }
  r.left_safety_box.assign(left.begin(), left.end());
  return r;
}

PotentialSchedule discrete_schedule(std::vector<double> times, std::vector<DiscretePotentials> values) {
  if (times.size() != values.size() || times.empty()) {
    throw std::invalid_argument("discrete_schedule: need one potential vector per time sample");
  }
  return [times = std::move(times), values = std::move(values)](double t) -> PotentialSource {
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
    const double w = (t - times[k]) / (times[k + 1] - times[k]);
    DiscretePotentials v;
    v.values.resize(values[k].values.size());
    for (std::size_t e = 0; e < v.values.size(); ++e) {
      v.values[e] = (1.0 - w) * values[k].values[e] + w * values[k + 1].values[e];
    }
    return v;
  };
}

PotentialSchedule continuous_schedule(std::shared_ptr<const PotentialMap> map) {
  if (!map) throw std::invalid_argument("continuous_schedule: empty map");
  return [map = std::move(map)](double) -> PotentialSource { return ContinuousMap{map}; };
}

RolloutResult rollout(const ControlProblem& problem, const PotentialSchedule& schedule, std::span<const Vec2d> x0,
                      int substeps) {
  problem.validate();
  if (substeps < 1) throw std::invalid_argument("rollout: substeps must be >= 1");
  const auto stencil = GHStencil::make(gauss_hermite(problem.consts.gh_order), problem.consts.sigma);
  const Box safety = problem.domain.enlarged(1.5);
  const double inv_mu = 1.0 / problem.consts.mu;
  const int steps = static_cast<int>(problem.time_count() - 1) * substeps;
  const VelocityField v = [&](const Vec2d& x, double t) {
    const Vec2d f = force(x, schedule(t), t, problem.array, problem.cap, problem.consts, stencil);
    return inv_mu * f;
  };
  return rollout(v, x0, problem.horizon, steps, &safety);
}

}  // namespace depshaper
