#pragma once

// Forward-mode dual numbers with an N-wide derivative vector.
//
// The component type T is either double (plain forward mode) or diff::Var, in
// which case every dual operation is itself recorded on a tape and the
// derivative parts become differentiable with respect to tape inputs
// (forward-over-reverse).

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

#include "depshaper/diff/tape.hpp"

namespace depshaper::diff {

inline double primal(double x) { return x; }

template <class T, std::size_t N>
struct Dual {
  T v{};
  std::array<T, N> d{};

  Dual() { d.fill(T(0.0)); }
  Dual(double c) : v(c) { d.fill(T(0.0)); }  // NOLINT: literals promote implicitly
  template <class U = T>
    requires(!std::is_same_v<U, double>)
  Dual(const T& c) : v(c) {  // NOLINT
    d.fill(T(0.0));
  }
  Dual(const T& value, const std::array<T, N>& deriv) : v(value), d(deriv) {}

  /// Seeds direction k with unit derivative.
  static Dual variable(const T& value, std::size_t k) {
    Dual r(value, zero_deriv());
    r.d[k] = T(1.0);
    return r;
  }

  static std::array<T, N> zero_deriv() {
    std::array<T, N> z;
    z.fill(T(0.0));
    return z;
  }

  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator-=(const Dual& o) { return *this = *this - o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }
};

template <class T, std::size_t N>
double primal(const Dual<T, N>& x) {
  return primal(x.v);
}

// Chain-rule helper: returns {f, f' * x.d}.
template <class T, std::size_t N>
Dual<T, N> chain(const Dual<T, N>& x, const T& f, const T& df) {
  Dual<T, N> r;
  r.v = f;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = df * x.d[k];
  return r;
}

template <class T, std::size_t N>
Dual<T, N> operator+(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v + b.v;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = a.d[k] + b.d[k];
  return r;
}

template <class T, std::size_t N>
Dual<T, N> operator-(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v - b.v;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = a.d[k] - b.d[k];
  return r;
}

template <class T, std::size_t N>
Dual<T, N> operator-(const Dual<T, N>& a) {
  Dual<T, N> r;
  r.v = -a.v;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = -a.d[k];
  return r;
}

template <class T, std::size_t N>
Dual<T, N> operator*(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v * b.v;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = a.d[k] * b.v + a.v * b.d[k];
  return r;
}

template <class T, std::size_t N>
Dual<T, N> operator/(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v / b.v;
  const T inv = T(1.0) / b.v;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = (a.d[k] - r.v * b.d[k]) * inv;
  return r;
}

// Mixed with double. Separate overloads keep template deduction unambiguous.
template <class T, std::size_t N>
Dual<T, N> operator+(const Dual<T, N>& a, double b) {
  Dual<T, N> r = a;
  r.v = a.v + b;
  return r;
}
template <class T, std::size_t N>
Dual<T, N> operator+(double a, const Dual<T, N>& b) {
  return b + a;
}
template <class T, std::size_t N>
Dual<T, N> operator-(const Dual<T, N>& a, double b) {
  Dual<T, N> r = a;
  r.v = a.v - b;
  return r;
}
template <class T, std::size_t N>
Dual<T, N> operator-(double a, const Dual<T, N>& b) {
  Dual<T, N> r = -b;
  r.v = a - b.v;
  return r;
}
template <class T, std::size_t N>
Dual<T, N> operator*(const Dual<T, N>& a, double b) {
  Dual<T, N> r;
  r.v = a.v * b;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = a.d[k] * b;
  return r;
}
template <class T, std::size_t N>
Dual<T, N> operator*(double a, const Dual<T, N>& b) {
  return b * a;
}
template <class T, std::size_t N>
Dual<T, N> operator/(const Dual<T, N>& a, double b) {
  return a * (1.0 / b);
}
template <class T, std::size_t N>
Dual<T, N> operator/(double a, const Dual<T, N>& b) {
  return Dual<T, N>(a) / b;
}

// Mixed with the component type (Dual<Var,N> op Var).
template <class T, std::size_t N>
  requires(!std::is_same_v<T, double>)
Dual<T, N> operator+(const Dual<T, N>& a, const std::type_identity_t<T>& b) {
  return a + Dual<T, N>(b);
}
template <class T, std::size_t N>
  requires(!std::is_same_v<T, double>)
Dual<T, N> operator+(const std::type_identity_t<T>& a, const Dual<T, N>& b) {
  return Dual<T, N>(a) + b;
}
template <class T, std::size_t N>
  requires(!std::is_same_v<T, double>)
Dual<T, N> operator-(const Dual<T, N>& a, const std::type_identity_t<T>& b) {
  return a - Dual<T, N>(b);
}
template <class T, std::size_t N>
  requires(!std::is_same_v<T, double>)
Dual<T, N> operator-(const std::type_identity_t<T>& a, const Dual<T, N>& b) {
  return Dual<T, N>(a) - b;
}
template <class T, std::size_t N>
  requires(!std::is_same_v<T, double>)
Dual<T, N> operator*(const Dual<T, N>& a, const std::type_identity_t<T>& b) {
  Dual<T, N> r;
  r.v = a.v * b;
  for (std::size_t k = 0; k < N; ++k) r.d[k] = a.d[k] * b;
  return r;
}
template <class T, std::size_t N>
  requires(!std::is_same_v<T, double>)
Dual<T, N> operator*(const std::type_identity_t<T>& a, const Dual<T, N>& b) {
  return b * a;
}
template <class T, std::size_t N>
  requires(!std::is_same_v<T, double>)
Dual<T, N> operator/(const Dual<T, N>& a, const std::type_identity_t<T>& b) {
  return a / Dual<T, N>(b);
}

template <class T, std::size_t N>
bool operator<(const Dual<T, N>& a, const Dual<T, N>& b) {
  return primal(a) < primal(b);
}
template <class T, std::size_t N>
bool operator>(const Dual<T, N>& a, const Dual<T, N>& b) {
  return primal(a) > primal(b);
}

template <class T, std::size_t N>
Dual<T, N> tanh(const Dual<T, N>& x) {
  using std::tanh;
  const T y = tanh(x.v);
  return chain(x, y, T(1.0) - y * y);
}

template <class T, std::size_t N>
Dual<T, N> exp(const Dual<T, N>& x) {
  using std::exp;
  const T y = exp(x.v);
  return chain(x, y, y);
}

template <class T, std::size_t N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
  using std::sqrt;
  const T y = sqrt(x.v);
  return chain(x, y, 0.5 / y);
}

template <class T, std::size_t N>
Dual<T, N> erf(const Dual<T, N>& x) {
  using std::erf;
  using std::exp;
  const T y = erf(x.v);
  return chain(x, y, T(1.1283791670955125739) * exp(-(x.v * x.v)));
}

template <class T, std::size_t N>
Dual<T, N> pow(const Dual<T, N>& x, double p) {
  using std::pow;
  const T y = pow(x.v, p);
  return chain(x, y, p * pow(x.v, p - 1.0));
}

}  // namespace depshaper::diff
