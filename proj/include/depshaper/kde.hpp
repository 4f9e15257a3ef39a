#pragma once

// Gaussian KDE over particle positions on a uniform cell-centred grid, and the
// discretized L2 loss against a target density.
//
// Kernel: (2 pi h1 h2)^{-1} exp(-1/2 [(d1/h1)^2 + (d2/h2)^2]), i.e. the
// standard form with H^{-1} in the exponent and H = diag(h1^2, h2^2).

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "depshaper/diff/diff.hpp"
#include "depshaper/vec2.hpp"

namespace depshaper {

struct Bandwidth {
  double h1 = 1.0;
  double h2 = 1.0;
};

/// h = 1.06 sigma n^{-1/5} per axis.
Bandwidth silverman_bandwidth(Vec2d sigma, std::size_t n);
inline Bandwidth silverman_bandwidth(double sigma, std::size_t n) { return silverman_bandwidth({sigma, sigma}, n); }

/// Cell (i1, i2) has centre (x1_min + (i1 + 1/2) dx1, x2_min + (i2 + 1/2) dx2)
/// and is stored at values[i2 * nx1 + i1].
struct DensityGrid {
  double x1_min = 0.0, x1_max = 1.0, x2_min = 0.0, x2_max = 1.0;
  int nx1 = 1, nx2 = 1;
  std::vector<double> values;

  static DensityGrid make(double x1_min, double x1_max, double x2_min, double x2_max, int nx1, int nx2);

  double dx1() const noexcept { return (x1_max - x1_min) / nx1; }
  double dx2() const noexcept { return (x2_max - x2_min) / nx2; }
  double cell_area() const noexcept { return dx1() * dx2(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx1) * nx2; }
  Vec2d center(std::size_t cell) const noexcept {
    const auto i1 = static_cast<int>(cell % nx1);
    const auto i2 = static_cast<int>(cell / nx1);
    return {x1_min + (i1 + 0.5) * dx1(), x2_min + (i2 + 0.5) * dx2()};
  }
  double mass() const;
  bool same_geometry(const DensityGrid& o) const noexcept;
  void validate() const;
};

/// Grid evaluation of the KDE; parallel over cells, fixed summation order.
DensityGrid kde_evaluate(std::span<const Vec2d> points, const Bandwidth& bw, const DensityGrid& grid);

/// Plain serial loop kept as the reference for kde_evaluate.
DensityGrid kde_evaluate_reference(std::span<const Vec2d> points, const Bandwidth& bw, const DensityGrid& grid);

/// Sum over cells of squared differences (the optimized quantity).
double l2_density_loss(const DensityGrid& estimate, const DensityGrid& target);

struct DensityLossReport {
  double sum = 0.0;     // raw sum of squares
  double riemann = 0.0; // sum * cell area
  double mse = 0.0;     // sum / cell count
};
DensityLossReport density_loss_report(const DensityGrid& estimate, const DensityGrid& target);

/// N(mean, sigma^2 I) density at the cell centres of `grid`.
DensityGrid gaussian_target(Vec2d mean, double sigma, const DensityGrid& grid);

/// L2 loss of the KDE of `points` against `target` and its gradient with
/// respect to every point (parallel, deterministic).  grad has 2n entries
/// laid out (x1, x2) per particle.
double kde_loss_and_gradient(std::span<const Vec2d> points, const Bandwidth& bw, const DensityGrid& target,
                             std::span<double> grad);

/// Generic form of the same loss for the differentiation engine.
template <class S>
S kde_loss(std::span<const Vec2<S>> points, const Bandwidth& bw, const DensityGrid& target) {
  const double norm = 1.0 / (2.0 * 3.14159265358979323846 * bw.h1 * bw.h2 * static_cast<double>(points.size()));
  const double i1 = 1.0 / bw.h1;
  const double i2 = 1.0 / bw.h2;
  S loss = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    const Vec2d xc = target.center(c);
    S f = 0.0;
    for (const auto& p : points) {
      const S d1 = (p.x1 - xc.x1) * i1;
      const S d2 = (p.x2 - xc.x2) * i2;
      f = f + math::exp(-0.5 * (d1 * d1 + d2 * d2));
    }
    const S diff = norm * f - target.values[c];
    loss = loss + diff * diff;
  }
  return loss;
}

// CSV `x1,x2,value` rows ordered by storage index; PGM (P2) heatmap with
// linear 0..255 scaling, rows from high x2 to low x2, min/max in a comment.
void write_grid_csv(const std::filesystem::path& path, const DensityGrid& grid);
void write_grid_pgm(const std::filesystem::path& path, const DensityGrid& grid);
std::string grid_to_pgm(const DensityGrid& grid);

}  // namespace depshaper
