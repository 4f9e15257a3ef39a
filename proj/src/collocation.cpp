#include <algorithm>
#include <cmath>
#include <random>

#include "depshaper/solver.hpp"

namespace depshaper {

CollocationObjective::CollocationObjective(const ControlProblem& problem) : problem_(&problem) {
  problem.validate();
  const std::size_t n = problem.particle_count();
  const std::size_t K = problem.time_count();
  n_pos_ = 2 * n * (K - 1);
  n_pot_ = problem.array.size() * K;

  tape_ = std::make_unique<diff::Tape>();
  const auto x = initial_guess();
  std::vector<diff::Var> in;
  in.reserve(x.size());
  for (double v : x) in.push_back(tape_->input(v));
  residual_out_ = residual_sum<diff::Var>(std::span<const diff::Var>(in));
}

std::vector<double> CollocationObjective::initial_guess(std::uint64_t seed, double potential_scale) const {
  const auto& pr = *problem_;
  const std::size_t n = pr.particle_count();
  std::vector<double> x(param_count(), 0.0);
  for (std::size_t k = 1; k < pr.time_count(); ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      x[((k - 1) * n + l) * 2] = pr.x0[l].x1;
      x[((k - 1) * n + l) * 2 + 1] = pr.x0[l].x2;
    }
  }
  if (potential_scale > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-potential_scale, potential_scale);
    for (std::size_t i = n_pos_; i < x.size(); ++i) x[i] = u(rng);
  }
  return x;
}

template <class S>
S CollocationObjective::residual_sum(std::span<const S> params) const {
  using D = diff::Dual<S, 2>;
  const auto& pr = *problem_;
  const std::size_t n = pr.particle_count();
  const std::size_t K = pr.time_count();
  const std::size_t E = pr.array.size();
  const double vmax = pr.array.v_max;
  const double inv_mu = 1.0 / pr.consts.mu;

  auto pos = [&](std::size_t k, std::size_t l) -> Vec2<S> {
    if (k == 0) return {S(pr.x0[l].x1), S(pr.x0[l].x2)};
    const std::size_t i = ((k - 1) * n + l) * 2;
    return {params[i], params[i + 1]};
  };

  // Velocities F/mu at every sample, then trapezoidal residuals between samples.
  std::vector<std::vector<Vec2<S>>> vel(K, std::vector<Vec2<S>>(n));
  std::vector<S> v(E);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t e = 0; e < E; ++e) v[e] = vmax * params[n_pos_ + k * E + e];
    for (std::size_t l = 0; l < n; ++l) {
      const Vec2<S> x = pos(k, l);
      const Vec2<D> xd{D::variable(x.x1, 0), D::variable(x.x2, 1)};
      const D u = potential_energy_discrete<D, S>(xd, pr.array, std::span<const S>(v), pr.cap);
      vel[k][l] = {u.d[0] * inv_mu, u.d[1] * inv_mu};
    }
  }
  S sum = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    const double dt = pr.times[k + 1] - pr.times[k];
    for (std::size_t l = 0; l < n; ++l) {
      const Vec2<S> r = trapezoid_residual(pos(k, l), pos(k + 1, l), vel[k][l], vel[k + 1][l], dt);
      sum = sum + r.x1 * r.x1 + r.x2 * r.x2;
    }
  }
  return sum;
}

template double CollocationObjective::residual_sum<double>(std::span<const double>) const;

LossTerms CollocationObjective::evaluate(std::span<const double> params, double lambda, std::span<double> grad) {
  const auto& pr = *problem_;
  if (params.size() != param_count() || grad.size() != param_count()) {
    throw std::invalid_argument("CollocationObjective::evaluate: size mismatch");
  }
  const std::size_t n = pr.particle_count();
  const double coef_r = lambda * pr.residual_multiplier;
  LossTerms terms;

  tape_->replay(params);
  terms.residual_sum = tape_->value(residual_out_);
  const auto adj = tape_->gradient(residual_out_);
  for (std::size_t i = 0; i < param_count(); ++i) grad[i] = coef_r * adj[i];

  std::vector<Vec2d> fin(n);
  const std::size_t last = (pr.time_count() - 2) * n;
  for (std::size_t l = 0; l < n; ++l) fin[l] = {params[(last + l) * 2], params[(last + l) * 2 + 1]};
  std::vector<double> g(2 * n);
  terms.kde = kde_loss_and_gradient(fin, pr.bandwidth, pr.target, g);
  for (std::size_t i = 0; i < 2 * n; ++i) grad[last * 2 + i] += g[i];

  terms.total = terms.kde + coef_r * terms.residual_sum;
  return terms;
}

LossTerms CollocationObjective::evaluate_reference(std::span<const double> params, double lambda,
                                                   std::span<double> grad) const {
  using diff::Var;
  const auto& pr = *problem_;
  if (params.size() != param_count() || grad.size() != param_count()) {
    throw std::invalid_argument("CollocationObjective::evaluate_reference: size mismatch");
  }
  const std::size_t n = pr.particle_count();
  diff::Tape tape;
  std::vector<Var> p;
  p.reserve(params.size());
  for (double v : params) p.push_back(tape.input(v));
  const Var r = residual_sum<Var>(std::span<const Var>(p));
  std::vector<Vec2<Var>> fin(n);
  const std::size_t last = (pr.time_count() - 2) * n;
  for (std::size_t l = 0; l < n; ++l) fin[l] = {p[(last + l) * 2], p[(last + l) * 2 + 1]};
  const Var kde = kde_loss<Var>(std::span<const Vec2<Var>>(fin), pr.bandwidth, pr.target);
  const Var total = kde + lambda * pr.residual_multiplier * r;
  const auto adj = tape.gradient(total);
  std::copy(adj.begin(), adj.end(), grad.begin());
  return {kde.value(), r.value(), 0.0, total.value()};
}

void CollocationObjective::project(std::span<double> params) const {
  const auto& box = problem_->domain;
  for (std::size_t i = 0; i < n_pos_; i += 2) {
    params[i] = project_box(params[i], box.x1_min, box.x1_max);
    params[i + 1] = project_box(params[i + 1], box.x2_min, box.x2_max);
  }
  project_box(params.subspan(n_pos_), -1.0, 1.0);
}

std::vector<std::vector<Vec2d>> CollocationObjective::positions(std::span<const double> params) const {
  const auto& pr = *problem_;
  const std::size_t n = pr.particle_count();
  std::vector<std::vector<Vec2d>> out(pr.time_count(), std::vector<Vec2d>(n));
  out[0] = pr.x0;
  for (std::size_t k = 1; k < pr.time_count(); ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      const std::size_t i = ((k - 1) * n + l) * 2;
      out[k][l] = {params[i], params[i + 1]};
    }
  }
  return out;
}

std::vector<DiscretePotentials> CollocationObjective::potentials(std::span<const double> params) const {
  const auto& pr = *problem_;
  const std::size_t E = pr.array.size();
  std::vector<DiscretePotentials> out(pr.time_count());
  for (std::size_t k = 0; k < pr.time_count(); ++k) {
    out[k].values.resize(E);
    for (std::size_t e = 0; e < E; ++e) out[k].values[e] = pr.array.v_max * params[n_pos_ + k * E + e];
  }
  return out;
}

}  // namespace depshaper
