#include "depshaper/kde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace depshaper {

Bandwidth silverman_bandwidth(Vec2d sigma, std::size_t n) {
  if (!(sigma.x1 > 0.0) || !(sigma.x2 > 0.0)) throw std::invalid_argument("silverman_bandwidth: sigma must be positive");
  if (n < 1) throw std::invalid_argument("silverman_bandwidth: need at least one particle");
  const double f = 1.06 * std::pow(static_cast<double>(n), -0.2);
  return {f * sigma.x1, f * sigma.x2};
}

DensityGrid DensityGrid::make(double x1_min, double x1_max, double x2_min, double x2_max, int nx1, int nx2) {
  DensityGrid g;
  g.x1_min = x1_min;
  g.x1_max = x1_max;
  g.x2_min = x2_min;
  g.x2_max = x2_max;
  g.nx1 = nx1;
  g.nx2 = nx2;
  g.validate();
  g.values.assign(g.size(), 0.0);
  return g;
}

void DensityGrid::validate() const {
  if (!(x1_max > x1_min) || !(x2_max > x2_min)) throw std::invalid_argument("DensityGrid: bounds must be ordered");
  if (nx1 < 1 || nx2 < 1) throw std::invalid_argument("DensityGrid: cell counts must be positive");
  if (!values.empty() && values.size() != size()) throw std::invalid_argument("DensityGrid: value count mismatch");
}

double DensityGrid::mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * cell_area();
}

bool DensityGrid::same_geometry(const DensityGrid& o) const noexcept {
  return x1_min == o.x1_min && x1_max == o.x1_max && x2_min == o.x2_min && x2_max == o.x2_max && nx1 == o.nx1 &&
         nx2 == o.nx2;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double kernel_sum(std::span<const Vec2d> points, const Vec2d& xc, double i1, double i2) {
  double f = 0.0;
  for (const auto& p : points) {
    const double d1 = (p.x1 - xc.x1) * i1;
    const double d2 = (p.x2 - xc.x2) * i2;
    f += std::exp(-0.5 * (d1 * d1 + d2 * d2));
  }
  return f;
}

void check_points(std::span<const Vec2d> points, const Bandwidth& bw) {
  if (points.empty()) throw std::invalid_argument("kde: need at least one point");
  if (!(bw.h1 > 0.0) || !(bw.h2 > 0.0)) throw std::invalid_argument("kde: bandwidth must be positive");
}

}  // namespace

DensityGrid kde_evaluate(std::span<const Vec2d> points, const Bandwidth& bw, const DensityGrid& grid) {
  check_points(points, bw);
  DensityGrid out = DensityGrid::make(grid.x1_min, grid.x1_max, grid.x2_min, grid.x2_max, grid.nx1, grid.nx2);
  const double norm = 1.0 / (kTwoPi * bw.h1 * bw.h2 * static_cast<double>(points.size()));
  const double i1 = 1.0 / bw.h1;
  const double i2 = 1.0 / bw.h2;
  const auto cells = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    out.values[c] = norm * kernel_sum(points, out.center(c), i1, i2);
  }
  return out;
}

DensityGrid kde_evaluate_reference(std::span<const Vec2d> points, const Bandwidth& bw, const DensityGrid& grid) {
  check_points(points, bw);
  DensityGrid out = DensityGrid::make(grid.x1_min, grid.x1_max, grid.x2_min, grid.x2_max, grid.nx1, grid.nx2);
  const double n = static_cast<double>(points.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    const Vec2d xc = out.center(c);
    double acc = 0.0;
    for (const auto& p : points) {
      const double d1 = xc.x1 - p.x1;
      const double d2 = xc.x2 - p.x2;
      acc += std::exp(-0.5 * (d1 * d1 / (bw.h1 * bw.h1) + d2 * d2 / (bw.h2 * bw.h2))) / (kTwoPi * bw.h1 * bw.h2);
    }
    out.values[c] = acc / n;
  }
  return out;
}

double l2_density_loss(const DensityGrid& estimate, const DensityGrid& target) {
  return density_loss_report(estimate, target).sum;
}

DensityLossReport density_loss_report(const DensityGrid& estimate, const DensityGrid& target) {
  if (!estimate.same_geometry(target) || estimate.values.size() != target.values.size()) {
    throw std::invalid_argument("l2_density_loss: grid geometry mismatch");
  }
  DensityLossReport r;
  for (std::size_t c = 0; c < estimate.values.size(); ++c) {
    const double d = estimate.values[c] - target.values[c];
    r.sum += d * d;
  }
  r.riemann = r.sum * estimate.cell_area();
  r.mse = r.sum / static_cast<double>(estimate.values.size());
  return r;
}

DensityGrid gaussian_target(Vec2d mean, double sigma, const DensityGrid& grid) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_target: sigma must be positive");
  DensityGrid out = DensityGrid::make(grid.x1_min, grid.x1_max, grid.x2_min, grid.x2_max, grid.nx1, grid.nx2);
  const double norm = 1.0 / (kTwoPi * sigma * sigma);
  for (std::size_t c = 0; c < out.size(); ++c) {
    const Vec2d x = out.center(c);
    const double d1 = x.x1 - mean.x1;
    const double d2 = x.x2 - mean.x2;
    out.values[c] = norm * std::exp(-0.5 * (d1 * d1 + d2 * d2) / (sigma * sigma));
  }
  return out;
}

double kde_loss_and_gradient(std::span<const Vec2d> points, const Bandwidth& bw, const DensityGrid& target,
                             std::span<double> grad) {
  check_points(points, bw);
  if (grad.size() != 2 * points.size()) throw std::invalid_argument("kde_loss_and_gradient: gradient size mismatch");
  const double norm = 1.0 / (kTwoPi * bw.h1 * bw.h2 * static_cast<double>(points.size()));
  const double i1 = 1.0 / bw.h1;
  const double i2 = 1.0 / bw.h2;
  const auto cells = static_cast<std::ptrdiff_t>(target.size());
  std::vector<double> resid(target.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    resid[c] = norm * kernel_sum(points, target.center(c), i1, i2) - target.values[c];
  }
  double loss = 0.0;
  for (double r : resid) loss += r * r;

  // d loss / d p = sum_c 2 r_c norm K_c (x_c - p) / h^2
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t l = 0; l < n; ++l) {
    const Vec2d p = points[l];
    double g1 = 0.0;
    double g2 = 0.0;
    for (std::ptrdiff_t c = 0; c < cells; ++c) {
      const Vec2d xc = target.center(c);
      const double d1 = (xc.x1 - p.x1) * i1;
      const double d2 = (xc.x2 - p.x2) * i2;
      const double w = resid[c] * std::exp(-0.5 * (d1 * d1 + d2 * d2));
      g1 += w * d1;
      g2 += w * d2;
    }
    grad[2 * l] = 2.0 * norm * g1 * i1;
    grad[2 * l + 1] = 2.0 * norm * g2 * i2;
  }
  return loss;
}

std::string grid_to_pgm(const DensityGrid& grid) {
  const auto [mn_it, mx_it] = std::minmax_element(grid.values.begin(), grid.values.end());
  const double mn = grid.values.empty() ? 0.0 : *mn_it;
  const double mx = grid.values.empty() ? 0.0 : *mx_it;
  std::ostringstream out;
  out.precision(17);
  out << "P2\n# min=" << mn << " max=" << mx << "\n" << grid.nx1 << ' ' << grid.nx2 << "\n255\n";
  const double span = mx - mn;
  for (int i2 = grid.nx2 - 1; i2 >= 0; --i2) {
    for (int i1 = 0; i1 < grid.nx1; ++i1) {
      const double v = grid.values[static_cast<std::size_t>(i2) * grid.nx1 + i1];
      const int level = span > 0.0 ? static_cast<int>(std::lround(255.0 * (v - mn) / span)) : 0;
      out << level << (i1 + 1 < grid.nx1 ? ' ' : '\n');
    }
  }
  return out.str();
}

void write_grid_pgm(const std::filesystem::path& path, const DensityGrid& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << grid_to_pgm(grid);
}

void write_grid_csv(const std::filesystem::path& path, const DensityGrid& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "x1,x2,value\n";
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const Vec2d x = grid.center(c);
    out << x.x1 << ',' << x.x2 << ',' << grid.values[c] << '\n';
  }
}

}  // namespace depshaper
