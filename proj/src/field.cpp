#include "depshaper/field.hpp"

#include <cmath>
#include <set>
#include <utility>

#include "depshaper/nnmap.hpp"

namespace depshaper {

ElectrodeArray ElectrodeArray::grid(int nx1, int nx2, double pitch, double v_max, Vec2d center) {
  if (nx1 <= 0 || nx2 <= 0) throw std::invalid_argument("ElectrodeArray::grid: counts must be positive");
  ElectrodeArray a;
  a.pitch = pitch;
  a.v_max = v_max;
  a.positions.reserve(static_cast<std::size_t>(nx1) * nx2);
  for (int i2 = 0; i2 < nx2; ++i2) {
    for (int i1 = 0; i1 < nx1; ++i1) {
      a.positions.push_back({center.x1 + (i1 - 0.5 * (nx1 - 1)) * pitch, center.x2 + (i2 - 0.5 * (nx2 - 1)) * pitch});
    }
  }
  a.validate();
  return a;
}

void ElectrodeArray::validate() const {
  if (!(pitch > 0.0)) throw std::invalid_argument("ElectrodeArray: pitch must be positive");
  if (!(v_max > 0.0)) throw std::invalid_argument("ElectrodeArray: v_max must be positive");
  std::set<std::pair<double, double>> seen;
  for (const auto& p : positions) {
    if (!seen.insert({p.x1, p.x2}).second) throw std::invalid_argument("ElectrodeArray: duplicate electrode position");
  }
}

void FieldConstants::validate() const {
  if (!(mu > 0.0)) throw std::invalid_argument("FieldConstants: mu must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("FieldConstants: sigma must be positive");
  if (gh_order < 2) throw std::invalid_argument("FieldConstants: gh_order must be >= 2");
}

GHStencil GHStencil::make(const GHRule& rule, double sigma) {
  GHStencil s;
  const double sq = std::sqrt(2.0) * sigma;
  const double inv_pi = 1.0 / 3.14159265358979323846;
  for (int i = 0; i < rule.order; ++i) {
    for (int j = 0; j < rule.order; ++j) {
      s.offsets.push_back({sq * rule.nodes[i], sq * rule.nodes[j]});
      s.weights.push_back(rule.weights[i] * rule.weights[j] * inv_pi);
    }
  }
  return s;
}

double particle_potential_discrete(const Vec2d& x, const ElectrodeArray& array, const DiscretePotentials& v,
                                   const CapacitanceModel& cap) {
  if (v.values.size() != array.size()) throw std::invalid_argument("potential count must equal electrode count");
  return particle_potential_discrete<double, double>(x, array, v.values, cap);
}

double potential_energy_discrete(const Vec2d& x, const ElectrodeArray& array, const DiscretePotentials& v,
                                 const CapacitanceModel& cap) {
  if (v.values.size() != array.size()) throw std::invalid_argument("potential count must equal electrode count");
  return potential_energy_discrete<double, double>(x, array, v.values, cap);
}

namespace {

auto map_at(const PotentialMap& vmap, double t) {
  return [&vmap, t](const auto& y1, const auto& y2) {
    using S = std::decay_t<decltype(y1)>;
    return vmap.value<S, double>(vmap.net().params(), y1, y2, t);
  };
}

}  // namespace

double mean_potential_gh(const Vec2d& x, const PotentialMap& vmap, double t, const FieldConstants& consts,
                         const GHRule& rule) {
  const auto stencil = GHStencil::make(rule, consts.sigma);
  return mean_potential_gh(x, map_at(vmap, t), stencil);
}

double potential_energy_gh(const Vec2d& x, const PotentialMap& vmap, double t, const FieldConstants& consts,
                           const GHRule& rule) {
  const auto stencil = GHStencil::make(rule, consts.sigma);
  return potential_energy_gh(x, map_at(vmap, t), stencil, consts.energy_scale);
}

Vec2d force(const Vec2d& x, const PotentialSource& source, double t, const ElectrodeArray& array,
            const CapacitanceModel& cap, const FieldConstants& consts, const GHStencil& stencil) {
  using D = diff::Dual<double, 2>;
  const Vec2<D> xd{D::variable(x.x1, 0), D::variable(x.x2, 1)};
  if (const auto* dp = std::get_if<DiscretePotentials>(&source)) {
    if (dp->values.size() != array.size()) throw std::invalid_argument("potential count must equal electrode count");
    const D u = potential_energy_discrete<D, double>(xd, array, dp->values, cap);
    return {u.d[0], u.d[1]};
  }
  const auto& cm = std::get<ContinuousMap>(source);
  if (!cm.map) throw std::invalid_argument("force: empty continuous map");
  return force_gh(x, map_at(*cm.map, t), stencil, consts.energy_scale);
}

Vec2d force(const Vec2d& x, const PotentialSource& source, double t, const ElectrodeArray& array,
            const CapacitanceModel& cap, const FieldConstants& consts, const GHRule& rule) {
  return force(x, source, t, array, cap, consts, GHStencil::make(rule, consts.sigma));
}

}  // namespace depshaper
