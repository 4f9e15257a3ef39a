#pragma once

// Electrode array, particle potential, potential energy and the force field
// mu * dx/dt = grad U.  The force follows the sign convention F = +grad U.
//
// Energies come in two forms:
//  * discrete sum over electrodes, U = 1/2 sum C_e (V_e - v)^2 with v the
//    capacitance-weighted mean potential;
//  * Gauss-Hermite tensor quadrature of the conditional variance of a
//    continuous potential map under N(x, sigma^2 I).
//
// All energy functions are generic over the scalar type; force() takes the
// gradient with forward-mode duals.

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "depshaper/capmodel.hpp"
#include "depshaper/diff/diff.hpp"
#include "depshaper/quadrature.hpp"
#include "depshaper/vec2.hpp"

namespace depshaper {

class PotentialMap;  // nnmap.hpp

struct ElectrodeArray {
  std::vector<Vec2d> positions;
  double pitch = 1.0;
  double v_max = 1.0;

  /// nx1 x nx2 grid with the given pitch, centred on `center`.
  /// Electrode index e = i2 * nx1 + i1.
  static ElectrodeArray grid(int nx1, int nx2, double pitch, double v_max, Vec2d center = {0.0, 0.0});

  std::size_t size() const noexcept { return positions.size(); }
  void validate() const;
};

struct DiscretePotentials {
  std::vector<double> values;  // one per electrode, |V| <= v_max
};

struct ContinuousMap {
  std::shared_ptr<const PotentialMap> map;
};

using PotentialSource = std::variant<DiscretePotentials, ContinuousMap>;

struct FieldConstants {
  double mu = 1.0;            // viscous coefficient
  double sigma = 1.0;         // Gaussian width of the capacitance kernel
  double energy_scale = 1.0;  // multiplier a on the Gauss-Hermite energy
  int gh_order = 30;

  void validate() const;
};

/// Tensor-product Gauss-Hermite points for N(0, sigma^2 I): offsets
/// sqrt(2) sigma (y_i, y_j) and normalized weights w_i w_j / pi.
struct GHStencil {
  std::vector<Vec2d> offsets;
  std::vector<double> weights;

  static GHStencil make(const GHRule& rule, double sigma);
  std::size_t size() const noexcept { return weights.size(); }
};

// --- discrete electrode sums ---------------------------------------------------

template <class S, class VS>
S particle_potential_discrete(const Vec2<S>& x, const ElectrodeArray& array, std::span<const VS> v,
                              const CapacitanceModel& cap) {
  S num = 0.0;
  S den = 0.0;
  for (std::size_t e = 0; e < array.size(); ++e) {
    const S c = capacitance_2d(cap, x, array.positions[e]);
    num = num + c * v[e];
    den = den + c;
  }
  return num / den;
}

template <class S, class VS>
S potential_energy_discrete(const Vec2<S>& x, const ElectrodeArray& array, std::span<const VS> v,
                            const CapacitanceModel& cap) {
  std::vector<S> c(array.size());
  S num = 0.0;
  S den = 0.0;
  for (std::size_t e = 0; e < array.size(); ++e) {
    c[e] = capacitance_2d(cap, x, array.positions[e]);
    num = num + c[e] * v[e];
    den = den + c[e];
  }
  const S vbar = num / den;
  S u = 0.0;
  for (std::size_t e = 0; e < array.size(); ++e) {
    const S dv = v[e] - vbar;
    u = u + c[e] * dv * dv;
  }
  return 0.5 * u;
}

// --- Gauss-Hermite forms -------------------------------------------------------
// `vmap(y1, y2)` evaluates the potential at a point at the (fixed) time.

template <class S, class Map>
S mean_potential_gh(const Vec2<S>& x, Map&& vmap, const GHStencil& stencil) {
  S acc = 0.0;
  for (std::size_t q = 0; q < stencil.size(); ++q) {
    acc = acc + stencil.weights[q] * vmap(x.x1 + stencil.offsets[q].x1, x.x2 + stencil.offsets[q].x2);
  }
  return acc;
}

template <class S, class Map>
S potential_energy_gh(const Vec2<S>& x, Map&& vmap, const GHStencil& stencil, double energy_scale) {
  std::vector<S> vals(stencil.size());
  S mean = 0.0;
  for (std::size_t q = 0; q < stencil.size(); ++q) {
    vals[q] = vmap(x.x1 + stencil.offsets[q].x1, x.x2 + stencil.offsets[q].x2);
    mean = mean + stencil.weights[q] * vals[q];
  }
  S var = 0.0;
  for (std::size_t q = 0; q < stencil.size(); ++q) {
    const S dv = vals[q] - mean;
    var = var + stencil.weights[q] * dv * dv;
  }
  return energy_scale * var;
}

// Convenience double-valued wrappers.
double particle_potential_discrete(const Vec2d& x, const ElectrodeArray& array, const DiscretePotentials& v,
                                   const CapacitanceModel& cap);
double potential_energy_discrete(const Vec2d& x, const ElectrodeArray& array, const DiscretePotentials& v,
                                 const CapacitanceModel& cap);
double mean_potential_gh(const Vec2d& x, const PotentialMap& vmap, double t, const FieldConstants& consts,
                         const GHRule& rule);
double potential_energy_gh(const Vec2d& x, const PotentialMap& vmap, double t, const FieldConstants& consts,
                           const GHRule& rule);

/// Gradient of the energy belonging to `source` (discrete sum for discrete
/// potentials, Gauss-Hermite for a continuous map), taken with duals.
Vec2d force(const Vec2d& x, const PotentialSource& source, double t, const ElectrodeArray& array,
            const CapacitanceModel& cap, const FieldConstants& consts, const GHRule& rule);

/// Same, with a precomputed stencil (hot loops).
Vec2d force(const Vec2d& x, const PotentialSource& source, double t, const ElectrodeArray& array,
            const CapacitanceModel& cap, const FieldConstants& consts, const GHStencil& stencil);

/// Gradient of the Gauss-Hermite energy for an arbitrary generic map
/// `vmap(S y1, S y2) -> S` (used by tests with analytic maps).
template <class Map>
Vec2d force_gh(const Vec2d& x, Map&& vmap, const GHStencil& stencil, double energy_scale) {
  using D = diff::Dual<double, 2>;
  const Vec2<D> xd{D::variable(x.x1, 0), D::variable(x.x2, 1)};
  const D u = potential_energy_gh(xd, vmap, stencil, energy_scale);
  return {u.d[0], u.d[1]};
}

}  // namespace depshaper
