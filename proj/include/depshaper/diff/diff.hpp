#pragma once

// Entry points of the differentiation engine: reverse-mode grad over a tape
// and forward-mode jvp over duals.  Both accept generic callables written
// against a scalar template parameter, so the same model code runs on double,
// Var, Dual<double,N> and Dual<Var,N>.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "depshaper/diff/dual.hpp"
#include "depshaper/diff/tape.hpp"

namespace depshaper::diff {

/// Reverse-mode gradient of a scalar function.
/// `f` is called once with a span of active Vars and must return a Var.
/// Returns f(x); `g` receives df/dx.
template <class F>
double grad(F&& f, std::span<const double> x, std::span<double> g) {
  if (g.size() != x.size()) throw std::invalid_argument("grad: gradient buffer size mismatch");
  Tape tape;
  std::vector<Var> in;
  in.reserve(x.size());
  for (double xi : x) in.push_back(tape.input(xi));
  const Var out = f(std::span<const Var>(in));
  const auto adj = tape.gradient(out);
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = adj[i];
  return out.value();
}

template <class F>
std::vector<double> grad(F&& f, std::span<const double> x) {
  std::vector<double> g(x.size());
  grad(std::forward<F>(f), x, std::span<double>(g));
  return g;
}

/// Forward-mode directional derivative of a scalar function along v.
/// T may itself be Var, which makes the result differentiable on a tape.
template <class T, class F>
T jvp(F&& f, std::span<const T> x, std::span<const double> v) {
  if (x.size() != v.size()) throw std::invalid_argument("jvp: direction size mismatch");
  using D = Dual<T, 1>;
  std::vector<D> in;
  in.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) in.push_back(D(x[i], {T(v[i])}));
  const D out = f(std::span<const D>(in));
  return out.d[0];
}

/// Forward-mode directional derivative of a vector function along v.
template <class T, class F>
std::vector<T> jvp_vector(F&& f, std::span<const T> x, std::span<const double> v) {
  if (x.size() != v.size()) throw std::invalid_argument("jvp: direction size mismatch");
  using D = Dual<T, 1>;
  std::vector<D> in;
  in.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) in.push_back(D(x[i], {T(v[i])}));
  const std::vector<D> out = f(std::span<const D>(in));
  std::vector<T> r;
  r.reserve(out.size());
  for (const auto& o : out) r.push_back(o.d[0]);
  return r;
}

/// Central finite-difference step used by every FD check in the project.
inline double fd_step(double value) { return 1e-6 * std::fmax(1.0, std::fabs(value)); }

}  // namespace depshaper::diff

namespace depshaper::math {
// Unqualified-call shims: generic code uses math::tanh(x) etc. and resolves
// to the std overload for double or the diff overload for Var/Dual.
using std::erf;
using std::exp;
using std::pow;
using std::sqrt;
using std::tanh;
using diff::erf;
using diff::exp;
using diff::pow;
using diff::sqrt;
using diff::tanh;
using diff::primal;
}  // namespace depshaper::math
