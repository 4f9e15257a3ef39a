#include <algorithm>
#include <cmath>

#include "depshaper/solver.hpp"

namespace depshaper {

namespace {

// Quadratic penalty for leaving [lo, hi]; returns the violation.
inline double violation(double x, double lo, double hi) {
  if (x < lo) return x - lo;
  if (x > hi) return x - hi;
  return 0.0;
}

double box_penalty_terms(const Box& box, double x1, double x2, double& g1, double& g2) {
  const double v1 = violation(x1, box.x1_min, box.x1_max);
  const double v2 = violation(x2, box.x2_min, box.x2_max);
  g1 = 2.0 * v1;
  g2 = 2.0 * v2;
  return v1 * v1 + v2 * v2;
}

}  // namespace

ContinuousObjective::ContinuousObjective(const ControlProblem& problem, const TrajectoryBundle& traj,
                                         const PotentialMap& vmap)
    : problem_(&problem),
      stencil_(GHStencil::make(gauss_hermite(problem.consts.gh_order), problem.consts.sigma)),
      hidden_traj_(traj.axis(0).hidden_dim()),
      hidden_vmap_(vmap.net().hidden_dim()),
      n_traj_(traj.axis(0).param_count()),
      n_vmap_(vmap.net().param_count()),
      traj_shape_(traj.axis(0)),
      vmap_shape_(vmap) {
  problem.validate();
  if (traj.particle_count() != problem.particle_count()) {
    throw std::invalid_argument("ContinuousObjective: trajectory bundle has " + std::to_string(traj.particle_count()) +
                                " particles, problem has " + std::to_string(problem.particle_count()));
  }
  if (traj.axis(1).hidden_dim() != hidden_traj_) {
    throw std::invalid_argument("ContinuousObjective: axis networks must share a hidden width");
  }
  if (vmap.net().transform().kind != OutputKind::Clip) {
    throw std::invalid_argument("ContinuousObjective: potential map must use a clip output");
  }
  if (std::fabs(traj.horizon() - problem.horizon) > 1e-12 * problem.horizon ||
      std::fabs(vmap.horizon() - problem.horizon) > 1e-12 * problem.horizon) {
    throw std::invalid_argument("ContinuousObjective: network horizon differs from the problem horizon");
  }
}

std::vector<double> ContinuousObjective::pack(const TrajectoryBundle& traj, const PotentialMap& vmap) const {
  std::vector<double> p;
  p.reserve(param_count());
  for (int a = 0; a < 2; ++a) {
    const auto s = traj.axis(a).params();
    p.insert(p.end(), s.begin(), s.end());
  }
  const auto s = vmap.net().params();
  p.insert(p.end(), s.begin(), s.end());
  if (p.size() != param_count()) throw std::invalid_argument("ContinuousObjective::pack: network shape mismatch");
  return p;
}

void ContinuousObjective::unpack(std::span<const double> params, TrajectoryBundle& traj, PotentialMap& vmap) const {
  if (params.size() != param_count()) throw std::invalid_argument("ContinuousObjective::unpack: size mismatch");
  for (int a = 0; a < 2; ++a) {
    auto dst = traj.axis(a).params();
    std::copy_n(params.begin() + a * n_traj_, n_traj_, dst.begin());
  }
  auto dst = vmap.net().params();
  std::copy_n(params.begin() + 2 * n_traj_, n_vmap_, dst.begin());
}

std::vector<std::vector<Vec2d>> ContinuousObjective::positions(std::span<const double> params) const {
  const auto& pr = *problem_;
  const std::size_t n = pr.particle_count();
  const std::size_t K = pr.time_count();
  const int H = hidden_traj_;
  std::vector<std::vector<Vec2d>> out(K, std::vector<Vec2d>(n));
  for (int a = 0; a < 2; ++a) {
    const auto p = params.subspan(a * n_traj_, n_traj_);
    std::vector<double> a0(H), ak(H);
    for (int h = 0; h < H; ++h) a0[h] = std::tanh(p[H + h]);
    for (std::size_t k = 0; k < K; ++k) {
      const double tau = pr.times[k] / pr.horizon;
      for (int h = 0; h < H; ++h) ak[h] = std::tanh(p[h] * tau + p[H + h]);
      for (std::size_t l = 0; l < n; ++l) {
        double acc = a == 0 ? pr.x0[l].x1 : pr.x0[l].x2;
        const double* w2 = &p[2 * H + l * H];
        for (int h = 0; h < H; ++h) acc += w2[h] * (ak[h] - a0[h]);
        (a == 0 ? out[k][l].x1 : out[k][l].x2) = acc;
      }
    }
  }
  return out;
}

// Forward pass and adjoint sweep written out by hand.
//
// Trajectories (per axis, hidden width H):
//   A[k,h] = tanh(W1_h tau_k + b1_h),  X[k,l] = x0_l + sum_h W2[l,h] (A[k,h] - A[0,h]),
//   Xd[k,l] = sum_h W2[l,h] W1_h (1 - A[k,h]^2) / T.
// Potential net at stencil point q: V_q = vmax * (b2 + sum_h w2_h a_h) with gradient g_q and
// Hessian H_q with respect to the particle position; the force is
//   F = 2 s sum_q w_q (V_q - vbar) g_q,  dF/dx = 2 s sum_q w_q [(V_q - vbar) H_q + (g_q - gbar) g_q^T].
LossTerms ContinuousObjective::evaluate(std::span<const double> params, double lambda, std::span<double> grad) const {
  const auto& pr = *problem_;
  if (params.size() != param_count() || grad.size() != param_count()) {
    throw std::invalid_argument("ContinuousObjective::evaluate: size mismatch");
  }
  const auto n = static_cast<std::ptrdiff_t>(pr.particle_count());
  const std::size_t K = pr.time_count();
  const int H = hidden_traj_;
  const int HV = hidden_vmap_;
  const std::size_t Q = stencil_.size();
  const double T = pr.horizon;
  const double mu = pr.consts.mu;
  const double s2 = 2.0 * pr.consts.energy_scale;
  const double coef_r = lambda * pr.residual_multiplier;
  const double wbox = pr.box_penalty;
  std::fill(grad.begin(), grad.end(), 0.0);

  // --- trajectories ------------------------------------------------------
  std::vector<double> A[2], S[2], X[2], Xd[2];
  for (int a = 0; a < 2; ++a) {
    const auto p = params.subspan(a * n_traj_, n_traj_);
    A[a].resize(K * H);
    S[a].resize(K * H);
    X[a].resize(K * n);
    Xd[a].resize(K * n);
    for (std::size_t k = 0; k < K; ++k) {
      const double tau = pr.times[k] / T;
      for (int h = 0; h < H; ++h) {
        const double act = std::tanh(p[h] * tau + p[H + h]);
        A[a][k * H + h] = act;
        S[a][k * H + h] = p[h] * (1.0 - act * act) / T;
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::ptrdiff_t l = 0; l < n; ++l) {
        const double* w2 = &p[2 * H + l * H];
        double x = a == 0 ? pr.x0[l].x1 : pr.x0[l].x2;
        double xd = 0.0;
        for (int h = 0; h < H; ++h) {
          x += w2[h] * (A[a][k * H + h] - A[a][h]);
          xd += w2[h] * S[a][k * H + h];
        }
        X[a][k * n + l] = x;
        Xd[a][k * n + l] = xd;
      }
    }
  }

  std::vector<double> gX[2] = {std::vector<double>(K * n, 0.0), std::vector<double>(K * n, 0.0)};
  std::vector<double> gXd[2] = {std::vector<double>(K * n, 0.0), std::vector<double>(K * n, 0.0)};

  // --- density term at T ----------------------------------------------------
  LossTerms terms;
  {
    std::vector<Vec2d> fin(n);
    for (std::ptrdiff_t l = 0; l < n; ++l) fin[l] = {X[0][(K - 1) * n + l], X[1][(K - 1) * n + l]};
    std::vector<double> g(2 * n);
    terms.kde = kde_loss_and_gradient(fin, pr.bandwidth, pr.target, g);
    for (std::ptrdiff_t l = 0; l < n; ++l) {
      gX[0][(K - 1) * n + l] += g[2 * l];
      gX[1][(K - 1) * n + l] += g[2 * l + 1];
    }
  }

  // --- dynamics residual and domain penalty -----------------------------
  const auto pv = params.subspan(2 * n_traj_, n_vmap_);
  const Mlp& vnet = vmap_shape_.net();
  const double* W1v = &pv[vnet.w1_offset()];
  const double* b1v = &pv[vnet.b1_offset()];
  const double* w2v = &pv[vnet.w2_offset()];
  const double b2v = pv[vnet.b2_offset()];
  const double vmax = vnet.transform().gain;
  const double vbound = vnet.transform().bound;
  const double al1 = vmap_shape_.scale(0), al2 = vmap_shape_.scale(1), al3 = vmap_shape_.scale(2);
  const double c1 = vmap_shape_.shift(0), c2 = vmap_shape_.shift(1), c3 = vmap_shape_.shift(2);

  std::vector<double> qoff(Q * HV);
  for (std::size_t q = 0; q < Q; ++q) {
    for (int h = 0; h < HV; ++h) {
      qoff[q * HV + h] = W1v[h * 3] * al1 * stencil_.offsets[q].x1 + W1v[h * 3 + 1] * al2 * stencil_.offsets[q].x2;
    }
  }

  std::vector<double> gv_part(static_cast<std::size_t>(n) * n_vmap_, 0.0);
  std::vector<double> r_part(n, 0.0), b_part(n, 0.0);

#pragma omp parallel
  {
    std::vector<double> act(Q * HV), base(HV);
    std::vector<double> V(Q), g1(Q), g2(Q), h11(Q), h12(Q), h22(Q);
    std::vector<char> clipped(Q);
#pragma omp for schedule(static)
    for (std::ptrdiff_t l = 0; l < n; ++l) {
      double* gv = &gv_part[l * n_vmap_];
      double* gW1 = gv + vnet.w1_offset();
      double* gb1 = gv + vnet.b1_offset();
      double* gw2 = gv + vnet.w2_offset();
      double& gb2 = gv[vnet.b2_offset()];
      double rsum = 0.0, bsum = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t kl = k * n + l;
        const double x1 = X[0][kl], x2 = X[1][kl];
        const double u3 = al3 * pr.times[k] + c3;
        for (int h = 0; h < HV; ++h) {
          base[h] = b1v[h] + W1v[h * 3] * (al1 * x1 + c1) + W1v[h * 3 + 1] * (al2 * x2 + c2) + W1v[h * 3 + 2] * u3;
        }
        double vbar = 0.0, gb1_ = 0.0, gb2_ = 0.0;
        for (std::size_t q = 0; q < Q; ++q) {
          double raw = b2v, s1 = 0.0, s2_ = 0.0, t11 = 0.0, t12 = 0.0, t22 = 0.0;
          double* aq = &act[q * HV];
          for (int h = 0; h < HV; ++h) {
            const double a = std::tanh(base[h] + qoff[q * HV + h]);
            aq[h] = a;
            const double ap = 1.0 - a * a;
            const double app = -2.0 * a * ap;
            const double w0 = W1v[h * 3], w1 = W1v[h * 3 + 1];
            raw += w2v[h] * a;
            const double wa = w2v[h] * ap;
            s1 += wa * w0;
            s2_ += wa * w1;
            const double wb = w2v[h] * app;
            t11 += wb * w0 * w0;
            t12 += wb * w0 * w1;
            t22 += wb * w1 * w1;
          }
          double v = vmax * raw;
          clipped[q] = 0;
          if (v > vbound || v < -vbound) {
            v = v > vbound ? vbound : -vbound;
            clipped[q] = 1;
            s1 = s2_ = t11 = t12 = t22 = 0.0;
          }
          V[q] = v;
          g1[q] = vmax * al1 * s1;
          g2[q] = vmax * al2 * s2_;
          h11[q] = vmax * al1 * al1 * t11;
          h12[q] = vmax * al1 * al2 * t12;
          h22[q] = vmax * al2 * al2 * t22;
          const double w = stencil_.weights[q];
          vbar += w * v;
          gb1_ += w * g1[q];
          gb2_ += w * g2[q];
        }
        double F1 = 0.0, F2 = 0.0;
        double J11 = 0.0, J12 = 0.0, J21 = 0.0, J22 = 0.0;  // J_de = dF_d / dx_e
        for (std::size_t q = 0; q < Q; ++q) {
          const double w = s2 * stencil_.weights[q];
          const double dv = V[q] - vbar;
          F1 += w * dv * g1[q];
          F2 += w * dv * g2[q];
          const double e1 = g1[q] - gb1_, e2 = g2[q] - gb2_;
          J11 += w * (dv * h11[q] + e1 * g1[q]);
          J12 += w * (dv * h12[q] + e2 * g1[q]);
          J21 += w * (dv * h12[q] + e1 * g2[q]);
          J22 += w * (dv * h22[q] + e2 * g2[q]);
        }
        const double r1 = Xd[0][kl] - F1 / mu;
        const double r2 = Xd[1][kl] - F2 / mu;
        rsum += r1 * r1 + r2 * r2;
        double bg1 = 0.0, bg2 = 0.0;
        bsum += box_penalty_terms(pr.domain, x1, x2, bg1, bg2);
        gX[0][kl] += wbox * bg1;
        gX[1][kl] += wbox * bg2;
        if (coef_r == 0.0) continue;

        gXd[0][kl] += 2.0 * coef_r * r1;
        gXd[1][kl] += 2.0 * coef_r * r2;
        const double gF1 = -2.0 * coef_r * r1 / mu;
        const double gF2 = -2.0 * coef_r * r2 / mu;
        gX[0][kl] += gF1 * J11 + gF2 * J21;
        gX[1][kl] += gF1 * J12 + gF2 * J22;

        // Potential-net parameters through V_q and g_q.
        const double gfb = gF1 * gb1_ + gF2 * gb2_;
        for (std::size_t q = 0; q < Q; ++q) {
          if (clipped[q]) continue;
          const double w = s2 * stencil_.weights[q];
          const double gamma_v = w * (gF1 * g1[q] + gF2 * g2[q] - gfb);
          const double dv = V[q] - vbar;
          const double gam1 = w * dv * gF1 * al1;  // gamma_g,d * alpha_d
          const double gam2 = w * dv * gF2 * al2;
          const double u1 = al1 * (x1 + stencil_.offsets[q].x1) + c1;
          const double u2 = al2 * (x2 + stencil_.offsets[q].x2) + c2;
          const double* aq = &act[q * HV];
          for (int h = 0; h < HV; ++h) {
            const double a = aq[h];
            const double ap = 1.0 - a * a;
            const double app = -2.0 * a * ap;
            const double G = gam1 * W1v[h * 3] + gam2 * W1v[h * 3 + 1];
            gw2[h] += vmax * (gamma_v * a + ap * G);
            const double dpre = vmax * w2v[h] * (gamma_v * ap + app * G);
            const double wa = vmax * w2v[h] * ap;
            gW1[h * 3] += dpre * u1 + wa * gam1;
            gW1[h * 3 + 1] += dpre * u2 + wa * gam2;
            gW1[h * 3 + 2] += dpre * u3;
            gb1[h] += dpre;
          }
          gb2 += vmax * gamma_v;
        }
      }
      r_part[l] = rsum;
      b_part[l] = bsum;
    }
  }

  double* gvn = &grad[2 * n_traj_];
  for (std::ptrdiff_t l = 0; l < n; ++l) {
    terms.residual_sum += r_part[l];
    terms.box += b_part[l];
    const double* gv = &gv_part[l * n_vmap_];
    for (std::size_t i = 0; i < n_vmap_; ++i) gvn[i] += gv[i];
  }

  // --- trajectory backprop, parallel over hidden units ------------------
  for (int a = 0; a < 2; ++a) {
    const auto p = params.subspan(a * n_traj_, n_traj_);
    double* g = &grad[a * n_traj_];
    const auto& Aa = A[a];
    const auto& Sa = S[a];
    const auto& gx = gX[a];
    const auto& gxd = gXd[a];
#pragma omp parallel
    {
      std::vector<double> dA(K);
#pragma omp for schedule(static)
      for (int h = 0; h < H; ++h) {
        const double w1 = p[h];
        double dA0 = 0.0, dW1 = 0.0, db1 = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double ak = Aa[k * H + h];
          const double dak = ak - Aa[h];
          const double sk = Sa[k * H + h];
          double da = 0.0, ds = 0.0;
          for (std::ptrdiff_t l = 0; l < n; ++l) {
            const double w2 = p[2 * H + l * H + h];
            const double gxk = gx[k * n + l];
            const double gdk = gxd[k * n + l];
            da += gxk * w2;
            ds += gdk * w2;
            g[2 * H + l * H + h] += gxk * dak + gdk * sk;
          }
          dA0 -= da;
          const double one_m = 1.0 - ak * ak;
          dW1 += ds * one_m / T;
          dA[k] = da + ds * (-2.0 * w1 * ak / T);
        }
        dA[0] += dA0;
        for (std::size_t k = 0; k < K; ++k) {
          const double ak = Aa[k * H + h];
          const double dpre = dA[k] * (1.0 - ak * ak);
          dW1 += dpre * (pr.times[k] / T);
          db1 += dpre;
        }
        g[h] = dW1;
        g[H + h] = db1;
      }
    }
  }

  terms.total = terms.kde + coef_r * terms.residual_sum + wbox * terms.box;
  return terms;
}

LossTerms ContinuousObjective::evaluate_reference(std::span<const double> params, double lambda,
                                                  std::span<double> grad) const {
  using diff::Dual;
  using diff::Var;
  using D1 = Dual<Var, 1>;
  using D2 = Dual<Var, 2>;
  const auto& pr = *problem_;
  if (params.size() != param_count() || grad.size() != param_count()) {
    throw std::invalid_argument("ContinuousObjective::evaluate_reference: size mismatch");
  }
  const std::size_t n = pr.particle_count();
  const std::size_t K = pr.time_count();
  const double T = pr.horizon;

  diff::Tape tape;
  std::vector<Var> p;
  p.reserve(params.size());
  for (double v : params) p.push_back(tape.input(v));
  const std::span<const Var> pspan(p);

  // x[a][k][l], xd[a][k][l]
  std::vector<std::vector<Var>> X[2], Xd[2];
  for (int a = 0; a < 2; ++a) {
    const auto pa = pspan.subspan(a * n_traj_, n_traj_);
    std::vector<Var> z0(n);
    const Var zero_in[1] = {Var(0.0)};
    traj_shape_.evaluate_raw<Var, Var>(pa, std::span<const Var>(zero_in, 1), std::span<Var>(z0));
    X[a].resize(K);
    Xd[a].resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      const D1 in[1] = {D1::variable(Var(pr.times[k] / T), 0)};
      std::vector<D1> z(n);
      traj_shape_.evaluate_raw<D1, Var>(pa, std::span<const D1>(in, 1), std::span<D1>(z));
      X[a][k].resize(n);
      Xd[a][k].resize(n);
      for (std::size_t l = 0; l < n; ++l) {
        const double x0 = a == 0 ? pr.x0[l].x1 : pr.x0[l].x2;
        X[a][k][l] = x0 + (z[l].v - z0[l]);
        Xd[a][k][l] = z[l].d[0] / T;
      }
    }
  }

  std::vector<Vec2<Var>> fin(n);
  for (std::size_t l = 0; l < n; ++l) fin[l] = {X[0][K - 1][l], X[1][K - 1][l]};
  const Var kde = kde_loss<Var>(std::span<const Vec2<Var>>(fin), pr.bandwidth, pr.target);

  const auto pv = pspan.subspan(2 * n_traj_, n_vmap_);
  Var rsum = 0.0;
  Var bsum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double t = pr.times[k];
    auto vmap = [&](const D2& y1, const D2& y2) { return vmap_shape_.value<D2, Var>(pv, y1, y2, t); };
    for (std::size_t l = 0; l < n; ++l) {
      const Vec2<D2> xd{D2::variable(X[0][k][l], 0), D2::variable(X[1][k][l], 1)};
      const D2 u = potential_energy_gh(xd, vmap, stencil_, pr.consts.energy_scale);
      const Var r1 = Xd[0][k][l] - u.d[0] / pr.consts.mu;
      const Var r2 = Xd[1][k][l] - u.d[1] / pr.consts.mu;
      rsum = rsum + r1 * r1 + r2 * r2;
      const Var xs[2] = {X[0][k][l], X[1][k][l]};
      const double lo[2] = {pr.domain.x1_min, pr.domain.x2_min};
      const double hi[2] = {pr.domain.x1_max, pr.domain.x2_max};
      for (int a = 0; a < 2; ++a) {
        if (xs[a].value() < lo[a]) bsum = bsum + (xs[a] - lo[a]) * (xs[a] - lo[a]);
        else if (xs[a].value() > hi[a]) bsum = bsum + (xs[a] - hi[a]) * (xs[a] - hi[a]);
      }
    }
  }
  const double coef_r = lambda * pr.residual_multiplier;
  const Var total = kde + coef_r * rsum + pr.box_penalty * bsum;
  const auto adj = tape.gradient(total);
  std::copy(adj.begin(), adj.end(), grad.begin());
  return {kde.value(), rsum.value(), bsum.value(), total.value()};
}

}  // namespace depshaper
