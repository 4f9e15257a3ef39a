#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/oracles.hpp"
#include "depshaper/kde.hpp"
#include "depshaper/parallel.hpp"

using namespace depshaper;

namespace {
constexpr double kPi = 3.14159265358979323846;

std::vector<Vec2d> random_points(std::mt19937_64& rng, int n, double r) {
  std::uniform_real_distribution<double> u(-r, r);
  std::vector<Vec2d> p;
  for (int i = 0; i < n; ++i) p.push_back({u(rng), u(rng)});
  return p;
}
}  // namespace

TEST_SUITE("kde") {

TEST_CASE("Silverman bandwidth") {
  CHECK(silverman_bandwidth(0.5e-3, 450).h1 == doctest::Approx(1.5617e-4).epsilon(1e-4));
  CHECK(silverman_bandwidth(1.0, 1).h1 == doctest::Approx(1.06).epsilon(1e-15));
  const auto b = silverman_bandwidth({2.0, 1.0}, 32);
  CHECK(b.h1 == doctest::Approx(1.06).epsilon(1e-14));
  CHECK(b.h2 == doctest::Approx(0.53).epsilon(1e-14));
}

TEST_CASE("single particle peak and coincident particles") {
  const auto g = DensityGrid::make(-1, 1, -1, 1, 20, 20);
  const Vec2d c = g.center(7 * 20 + 4);
  const Bandwidth bw{0.2, 0.2};
  const std::vector<Vec2d> one{c};
  const auto f = kde_evaluate(one, bw, g);
  CHECK(f.values[7 * 20 + 4] == doctest::Approx(1.0 / (2 * kPi * 0.04)).epsilon(1e-14));
  CHECK(*std::max_element(f.values.begin(), f.values.end()) == f.values[7 * 20 + 4]);
  const std::vector<Vec2d> many(13, c);
  const auto f13 = kde_evaluate(many, bw, g);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(f13.values[i] == doctest::Approx(f.values[i]).epsilon(1e-14));
}

TEST_CASE("mass is one when kernels stay inside the grid") {
  std::mt19937_64 rng(5);
  const auto g = DensityGrid::make(-2, 2, -2, 2, 80, 80);
  for (int rep = 0; rep < 20; ++rep) {
    const Bandwidth bw{0.1 + 0.1 * (rep % 3), 0.15};
    const auto f = kde_evaluate(random_points(rng, 30, 2.0 - 5 * 0.3), bw, g);
    CHECK(f.mass() == doctest::Approx(1.0).epsilon(1e-2));
    for (double v : f.values) CHECK(v >= 0.0);
  }
}

TEST_CASE("parallel evaluation matches the serial reference and ignores thread count") {
  std::mt19937_64 rng(6);
  const auto g = DensityGrid::make(-1, 1, -0.5, 1.5, 33, 27);
  const auto pts = random_points(rng, 57, 1.0);
  const Bandwidth bw{0.12, 0.2};
  const auto ref = kde_evaluate_reference(pts, bw, g);
  const int prev = max_threads();
  configure_threads(1);
  const auto one = kde_evaluate(pts, bw, g);
  configure_threads(3);
  const auto three = kde_evaluate(pts, bw, g);
  configure_threads(prev);
  CHECK(one.values == three.values);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(one.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-13));
}

TEST_CASE("permutation invariance") {
  std::mt19937_64 rng(7);
  const auto g = DensityGrid::make(-1, 1, -1, 1, 24, 24);
  auto pts = random_points(rng, 40, 1.0);
  const Bandwidth bw{0.15, 0.15};
  const auto a = kde_evaluate(pts, bw, g);
  std::shuffle(pts.begin(), pts.end(), rng);
  const auto b = kde_evaluate(pts, bw, g);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(b.values[i] == doctest::Approx(a.values[i]).epsilon(1e-13));
}

TEST_CASE("L2 loss") {
  const auto g = DensityGrid::make(0, 1, 0, 1, 6, 5);
  auto t = gaussian_target({0.5, 0.5}, 0.2, g);
  CHECK(l2_density_loss(t, t) == 0.0);
  auto e = t;
  for (double& v : e.values) v += 0.3;
  CHECK(l2_density_loss(e, t) == doctest::Approx(30 * 0.09).epsilon(1e-12));
  const auto r = density_loss_report(e, t);
  CHECK(r.mse == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(r.riemann == doctest::Approx(30 * 0.09 * g.cell_area()).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (double& v : e.values) v = u(rng);
  long double ref = 0;
  for (std::size_t i = 0; i < g.size(); ++i) ref += (static_cast<long double>(e.values[i]) - t.values[i]) * (e.values[i] - t.values[i]);
  CHECK(l2_density_loss(e, t) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-13));

  const auto other = DensityGrid::make(0, 1, 0, 1, 5, 6);
  CHECK_THROWS_AS(l2_density_loss(e, gaussian_target({0.5, 0.5}, 0.2, other)), std::invalid_argument);
}

TEST_CASE("Gaussian target") {
  const auto g = DensityGrid::make(-1, 1, -1, 1, 50, 50);
  const auto t = gaussian_target({0.1, -0.1}, 0.15, g);
  CHECK(t.mass() == doctest::Approx(1.0).epsilon(1e-3));
  const Vec2d c = g.center(13);
  CHECK(t.values[13] == doctest::Approx(std::exp(-0.5 * (std::pow(c.x1 - 0.1, 2) + std::pow(c.x2 + 0.1, 2)) / 0.0225) /
                                        (2 * kPi * 0.0225)).epsilon(1e-14));
}

TEST_CASE("loss gradient matches finite differences and the tape") {
  std::mt19937_64 rng(11);
  const auto g = DensityGrid::make(-1, 1, -1, 1, 16, 16);
  const auto t = gaussian_target({0.0, 0.2}, 0.3, g);
  const Bandwidth bw{0.25, 0.2};
  for (int rep = 0; rep < 5; ++rep) {
    const auto pts = random_points(rng, 6, 0.7);
    std::vector<double> grad(12);
    const double loss = kde_loss_and_gradient(pts, bw, t, grad);
    std::vector<double> flat;
    for (const auto& p : pts) {
      flat.push_back(p.x1);
      flat.push_back(p.x2);
    }
    auto f = [&](std::span<const double> x) {
      std::vector<Vec2d> q;
      for (std::size_t i = 0; i < x.size(); i += 2) q.push_back({x[i], x[i + 1]});
      return kde_loss(std::span<const Vec2d>(q), bw, t);
    };
    CHECK(loss == doctest::Approx(f(flat)).epsilon(1e-13));
    CHECK(loss == doctest::Approx(l2_density_loss(kde_evaluate(pts, bw, g), t)).epsilon(1e-12));
    CHECK(testing::max_mixed_error(grad, testing::fd_gradient(f, flat)) < 1e-5);
    const auto tape = diff::grad(
        [&](std::span<const diff::Var> x) {
          std::vector<Vec2<diff::Var>> q;
          for (std::size_t i = 0; i < x.size(); i += 2) q.push_back({x[i], x[i + 1]});
          return kde_loss(std::span<const Vec2<diff::Var>>(q), bw, t);
        },
        flat);
    CHECK(testing::max_mixed_error(grad, tape) < 1e-12);
  }
}

TEST_CASE("grid output formats") {
  auto g = DensityGrid::make(0, 2, 0, 1, 2, 2);
  g.values = {0.0, 1.0, 2.0, 4.0};
  const auto pgm = grid_to_pgm(g);
  CHECK(pgm.rfind("P2", 0) == 0);
  CHECK(pgm.find("\n2 2\n") != std::string::npos);
  // top row is high x2: cells 2, 3
  CHECK(pgm.find("128 255\n0 64") != std::string::npos);
  const auto p = std::filesystem::temp_directory_path() / "depshaper_test_grid.csv";
  write_grid_csv(p, g);
  std::ifstream in(p);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "x1,x2,value");
  CHECK(row.rfind("0.5,0.25,0", 0) == 0);
  std::filesystem::remove(p);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(DensityGrid::make(0, 0, 0, 1, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(DensityGrid::make(0, 1, 0, 1, 0, 4), std::invalid_argument);
}

}
