#pragma once

// Density-shaping optimal control.
//
//  * solve_continuous: trajectory networks + potential-map network trained
//    with Adam on  sum_cells (KDE(x(T)) - f_d)^2 + lambda * sum_{l,k} |xdot - F/mu|^2
//    (+ a quadratic penalty for leaving the domain), with a periodic
//    projected dual step on lambda.  Forces use the Gauss-Hermite energy.
//  * solve_collocation: raw positions x_l(t_k) and per-electrode potentials
//    V_e(t_k) as decision variables, trapezoidal dynamics residual, discrete
//    electrode-sum energy.  Intended for small instances (<= 20 particles,
//    <= 5x5 electrodes, <= 50 time samples).
//  * rollout: Heun integration of the particle ODEs under a fixed control.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depshaper/capmodel.hpp"
#include "depshaper/diff/diff.hpp"
#include "depshaper/field.hpp"
#include "depshaper/kde.hpp"
#include "depshaper/nnmap.hpp"
#include "depshaper/optim.hpp"
#include "depshaper/quadrature.hpp"

namespace depshaper {

struct Box {
  double x1_min = -1.0, x1_max = 1.0, x2_min = -1.0, x2_max = 1.0;

  bool contains(const Vec2d& p) const noexcept {
    return p.x1 >= x1_min && p.x1 <= x1_max && p.x2 >= x2_min && p.x2 <= x2_max;
  }
  Vec2d clamp(const Vec2d& p) const noexcept;
  /// Same centre, each side scaled by `factor`.
  Box enlarged(double factor) const noexcept;
  double width() const noexcept { return x1_max - x1_min; }
};

enum class SolverMode { ContinuousMap, DiscreteCollocation };

struct ControlProblem {
  Box domain;
  double horizon = 1.0;
  std::vector<double> times;  // t_0 = 0 < ... < t_{K-1} = horizon
  ElectrodeArray array;
  CapacitanceModel cap;
  FieldConstants consts;
  std::vector<Vec2d> x0;
  DensityGrid target;  // target density, also fixes the loss grid geometry
  Bandwidth bandwidth;
  double residual_tol = 1e-3;         // tolerance per (particle, time) residual
  double residual_multiplier = 1.0;   // optional replication factor on the residual sum
  double box_penalty = 1e3;

  static std::vector<double> uniform_times(double horizon, int count);
  std::size_t particle_count() const noexcept { return x0.size(); }
  std::size_t time_count() const noexcept { return times.size(); }
  void validate() const;
};

struct TrainConfig {
  AdamConfig adam;
  int max_iterations = 2000;
  int dual_interval = 50;
  double lambda0 = 1.0;
  double alpha = 1e-3;
  int history_stride = 10;
  double residual_warn_factor = 10.0;
  bool deterministic = true;
};

struct LossTerms {
  double kde = 0.0;           // raw sum over cells
  double residual_sum = 0.0;  // sum over (particle, time) of |residual|^2
  double box = 0.0;           // domain penalty (unweighted)
  double total = 0.0;
};

struct HistoryEntry {
  int iteration = 0;
  double kde = 0.0;
  double residual_sum = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

struct SolveReport {
  std::string mode;
  std::string status = "ok";  // "ok" | "residual_warning"
  std::vector<Vec2d> final_positions;
  DensityGrid final_kde;
  std::vector<HistoryEntry> history;
  double initial_loss_sum = 0.0;
  double final_loss_sum = 0.0;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  double mse_reduction = 0.0;
  double final_residual_sum = 0.0;
  double mean_residual = 0.0;
  double residual_tol = 0.0;
  double final_lambda = 0.0;
  double min_lambda = 0.0;
  double wall_time_s = 0.0;
  int iterations = 0;
};

/// JSON serialization; timing is omitted when include_timing is false so that
/// deterministic reruns are byte-identical.
std::string report_to_json(const SolveReport& report, bool include_timing);

class SolveError : public std::runtime_error {
public:
  SolveError(const std::string& what, int iteration, LossTerms terms)
      : std::runtime_error(what), iteration_(iteration), terms_(terms) {}
  int iteration() const noexcept { return iteration_; }
  const LossTerms& terms() const noexcept { return terms_; }

private:
  int iteration_;
  LossTerms terms_;
};

// --- continuous-map objective ----------------------------------------------------

/// Flattened parameters [axis-1 trajectory net | axis-2 trajectory net | potential net].
class ContinuousObjective {
public:
  ContinuousObjective(const ControlProblem& problem, const TrajectoryBundle& traj, const PotentialMap& vmap);

  std::size_t param_count() const noexcept { return n_traj_ * 2 + n_vmap_; }
  std::vector<double> pack(const TrajectoryBundle& traj, const PotentialMap& vmap) const;
  void unpack(std::span<const double> params, TrajectoryBundle& traj, PotentialMap& vmap) const;

  /// Loss and gradient via hand-derived adjoints; OpenMP-parallel over
  /// particles with partial gradients reduced in particle order.
  LossTerms evaluate(std::span<const double> params, double lambda, std::span<double> grad) const;

  /// Same quantity recorded on the AD tape (forward-over-reverse). Serial;
  /// meant for small instances and for checking evaluate().
  LossTerms evaluate_reference(std::span<const double> params, double lambda, std::span<double> grad) const;

  /// Positions at every time sample, [k][l].
  std::vector<std::vector<Vec2d>> positions(std::span<const double> params) const;

  const ControlProblem& problem() const noexcept { return *problem_; }
  const GHStencil& stencil() const noexcept { return stencil_; }

private:
  const ControlProblem* problem_;
  GHStencil stencil_;
  int hidden_traj_;
  int hidden_vmap_;
  std::size_t n_traj_;
  std::size_t n_vmap_;
  Mlp traj_shape_;
  PotentialMap vmap_shape_;
};

// --- discrete collocation objective ------------------------------------------

/// Decision variables: positions x_l(t_k) for k >= 1 (2 per particle, per
/// step) followed by normalized potentials V_e(t_k) / v_max for every k.
class CollocationObjective {
public:
  explicit CollocationObjective(const ControlProblem& problem);

  std::size_t param_count() const noexcept { return n_pos_ + n_pot_; }
  std::size_t position_count() const noexcept { return n_pos_; }
  /// Stationary particles; normalized potentials uniform in +-potential_scale
  /// (seeded).  Force is quadratic in the potentials, so all-zero potentials
  /// are a stationary point of the residual term.
  std::vector<double> initial_guess(std::uint64_t seed = 0, double potential_scale = 0.0) const;

  /// Replays a tape recorded once at construction; the KDE term uses the
  /// parallel kernel.
  LossTerms evaluate(std::span<const double> params, double lambda, std::span<double> grad);

  /// Records a fresh tape for the whole loss, KDE included.
  LossTerms evaluate_reference(std::span<const double> params, double lambda, std::span<double> grad) const;

  /// Box projection of positions onto the domain and potentials onto [-1, 1].
  void project(std::span<double> params) const;

  std::vector<std::vector<Vec2d>> positions(std::span<const double> params) const;
  std::vector<DiscretePotentials> potentials(std::span<const double> params) const;

private:
  template <class S>
  S residual_sum(std::span<const S> params) const;

  const ControlProblem* problem_;
  std::size_t n_pos_;
  std::size_t n_pot_;
  std::unique_ptr<diff::Tape> tape_;
  diff::Var residual_out_;
};

/// Trapezoidal collocation residual x_{k+1} - x_k - dt/2 (v_{k+1} + v_k).
template <class S>
Vec2<S> trapezoid_residual(const Vec2<S>& xk, const Vec2<S>& xk1, const Vec2<S>& vk, const Vec2<S>& vk1, double dt) {
  return {xk1.x1 - xk.x1 - 0.5 * dt * (vk1.x1 + vk.x1), xk1.x2 - xk.x2 - 0.5 * dt * (vk1.x2 + vk.x2)};
}

// --- solvers ---------------------------------------------------------------------

struct ContinuousNets {
  TrajectoryBundle trajectories;
  std::shared_ptr<PotentialMap> potential;
};

/// Builds nets for `problem`: trajectory networks calibrated to the initial
/// positions (stationary at start), potential map near zero output.
ContinuousNets make_continuous_nets(const ControlProblem& problem, int hidden_traj, int hidden_vmap,
                                    std::uint64_t seed, double traj_output_scale, double vmap_output_scale);

SolveReport solve_continuous(const ControlProblem& problem, ContinuousNets& nets, const TrainConfig& config);

struct CollocationSolution {
  SolveReport report;
  std::vector<std::vector<Vec2d>> positions;     // [k][l]
  std::vector<DiscretePotentials> potentials;    // [k]
};

CollocationSolution solve_collocation(const ControlProblem& problem, const TrainConfig& config, std::uint64_t seed = 0,
                                      double potential_init_scale = 0.0);

// --- rollout -------------------------------------------------------------------------

using VelocityField = std::function<Vec2d(const Vec2d& x, double t)>;

struct RolloutResult {
  std::vector<double> times;
  std::vector<std::vector<Vec2d>> positions;  // [step][particle]
  std::vector<bool> left_safety_box;          // per particle
};

/// Explicit trapezoidal (Heun) integration at `steps` uniform steps over
/// [0, horizon]; parallel over particles.  When `safety` is given, particles
/// leaving it are flagged and clamped.
RolloutResult rollout(const VelocityField& velocity, std::span<const Vec2d> x0, double horizon, int steps,
                      const Box* safety = nullptr);

/// Potentials as a function of time.
using PotentialSchedule = std::function<PotentialSource(double t)>;

/// Piecewise-linear interpolation of per-sample discrete potentials.
PotentialSchedule discrete_schedule(std::vector<double> times, std::vector<DiscretePotentials> values);
PotentialSchedule continuous_schedule(std::shared_ptr<const PotentialMap> map);

/// Rollout of the problem's dynamics mu xdot = grad U under `schedule`, with
/// (K-1) * substeps steps and the 1.5x enlarged domain as safety box.
RolloutResult rollout(const ControlProblem& problem, const PotentialSchedule& schedule, std::span<const Vec2d> x0,
                      int substeps);

}  // namespace depshaper
