#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/oracles.hpp"
#include "depshaper/capmodel.hpp"

using namespace depshaper;
namespace fs = std::filesystem;

namespace {

// erf by its Maclaurin series, adequate for |x| <= 3.
double erf_series(double x) {
  double term = x, sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    sum += term / (2 * n + 1);
  }
  return 2.0 / std::sqrt(3.14159265358979323846) * sum;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("depshaper_test_" + name); }

}  // namespace

TEST_SUITE("capmodel") {

TEST_CASE("eval_1d examples") {
  const auto m = CapacitanceModel::single(1.0, 1.0, 1.0);
  CHECK(eval_1d(m, 0.0) == doctest::Approx(2.0 * erf_series(1.0)).epsilon(1e-13));
  CHECK(eval_1d(m, 0.0) == doctest::Approx(1.6853).epsilon(1e-4));
  CHECK(eval_1d(m, 1.0) == doctest::Approx(erf_series(2.0)).epsilon(1e-13));
  CHECK(eval_1d(m, 1.0) == doctest::Approx(0.99532).epsilon(1e-5));
  CHECK(std::fabs(eval_1d(m, 1e6)) <= 1e-12);
  const auto m2 = CapacitanceModel({{1.0, 0.3}, {0.5, 2.0}}, 0.4);
  CHECK(std::fabs(eval_1d(m2, 2e6)) <= 1e-12);
}

TEST_CASE("single-term shape: positive, even, peaked at zero") {
  const auto m = CapacitanceModel::single(2.0, 0.3, 0.2);
  double prev = eval_1d(m, 0.0);
  for (int i = 1; i <= 100; ++i) {
    const double xi = 0.01 * i;
    const double v = eval_1d(m, xi);
    CHECK(v > 0.0);
    CHECK(v < prev);
    CHECK(eval_1d(m, -xi) == doctest::Approx(v).epsilon(1e-15));
    prev = v;
  }
  CHECK(m.sigma() == doctest::Approx(0.3 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(m.scale() == 2.0);
}

TEST_CASE("Gaussian-window reading with sigma = c / sqrt(2)") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto m = CapacitanceModel::from_sigma(0.8, 0.3, 0.25);
  for (int i = 0; i < 100; ++i) {
    const double xi = u(rng);
    CHECK(std::fabs(eval_1d(m, xi) - testing::gaussian_window(0.8, 0.3, 0.25, xi)) <= 1e-10);
    // Same identity written with erf on N(xi, sigma^2).
    const double s = 0.3 * std::sqrt(2.0);
    const double w = 0.8 * (std::erf((xi + 0.25) / s) - std::erf((xi - 0.25) / s));
    CHECK(eval_1d(m, xi) == doctest::Approx(w).epsilon(1e-14));
  }
}

TEST_CASE("eval_2d is radial") {
  const auto m = CapacitanceModel::single(1.0, 1.0, 1.0);
  const Vec2d y{0.3, -0.2};
  CHECK(eval_2d(m, y, y) == doctest::Approx(eval_1d(m, 0.0)).epsilon(1e-14));
  CHECK(eval_2d(m, {y.x1 + 3.0, y.x2 + 4.0}, y) == doctest::Approx(eval_1d(m, 5.0)).epsilon(1e-13));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0), ang(0.0, 6.283185307179586);
  for (int i = 0; i < 100; ++i) {
    const Vec2d d{u(rng), u(rng)};
    const double th = ang(rng);
    const Vec2d r{std::cos(th) * d.x1 - std::sin(th) * d.x2, std::sin(th) * d.x1 + std::cos(th) * d.x2};
    CHECK(std::fabs(eval_2d(m, {y.x1 + d.x1, y.x2 + d.x2}, y) - eval_2d(m, {y.x1 + r.x1, y.x2 + r.x2}, y)) <= 1e-12);
  }
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(CapacitanceModel({{1.0, 0.0}}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(CapacitanceModel({{1.0, 1.0}}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(CapacitanceModel({}, 1.0), std::invalid_argument);
}

TEST_CASE("synth_samples") {
  std::vector<double> grid;
  for (int i = -50; i <= 50; ++i) grid.push_back(0.02 * i);
  const auto s = synth_samples(1.5, 0.2, 0.125, grid, 0.0);
  const auto m = CapacitanceModel::single(1.5, 0.2, 0.125);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(s.values[i] == eval_1d(m, grid[i]));
    CHECK(s.values[i] == s.values[grid.size() - 1 - i]);
  }
  CHECK(s.synthetic);
  const auto n1 = synth_samples(1.5, 0.2, 0.125, grid, 0.01, 42);
  const auto n2 = synth_samples(1.5, 0.2, 0.125, grid, 0.01, 42);
  CHECK(n1.values == n2.values);
  CHECK(n1.values != s.values);
}

TEST_CASE("fit recovers generator parameters") {
  const double delta = 0.125;
  std::vector<double> grid;
  for (int i = 0; i <= 200; ++i) grid.push_back(-100.0 * delta + i * delta);
  SUBCASE("noiseless, wide grid") {
    const auto s = synth_samples(2.5, 0.7 * delta, delta, grid, 0.0);
    const auto r = fit(s, 1, delta);
    CHECK(r.model.terms()[0].a == doctest::Approx(2.5).epsilon(0.01));
    CHECK(r.model.terms()[0].c == doctest::Approx(0.7 * delta).epsilon(0.01));
    CHECK(r.rms < 1e-8);
  }
  std::vector<double> fine;
  for (int i = 0; i <= 200; ++i) fine.push_back(-1.0 + 0.01 * i);
  SUBCASE("one percent noise") {
    const auto s = synth_samples(1.2, 0.3, delta, fine, 0.01, 5);
    const auto r = fit(s, 1, delta);
    CHECK(r.model.terms()[0].a == doctest::Approx(1.2).epsilon(0.05));
    CHECK(r.model.terms()[0].c == doctest::Approx(0.3).epsilon(0.05));
  }
  SUBCASE("all-zero samples") {
    CapacitanceSamples s;
    s.positions = fine;
    s.values.assign(fine.size(), 0.0);
    try {
      const auto r = fit(s, 1, delta);
      CHECK(std::fabs(r.model.terms()[0].a) < 1e-8);
      CHECK(r.rms < 1e-8);
    } catch (const FitError& e) {
      CHECK(e.rms() >= 0.0);
    }
  }
  SUBCASE("too few samples") {
    CapacitanceSamples s;
    s.positions = {0.0, 0.1};
    s.values = {1.0, 0.9};
    CHECK_THROWS_AS(fit(s, 1, delta), std::invalid_argument);
  }
}

TEST_CASE("fit reports non-convergence with the best iterate") {
  const auto s = synth_samples(1.0, 0.3, 0.125, std::vector<double>{-0.4, -0.2, 0.0, 0.2, 0.4, 0.6}, 0.0);
  FitOptions o;
  o.max_iterations = 1;
  o.tolerance = 0.0;
  try {
    fit(s, 2, 0.125, o);
    CHECK(true);  // converged within one step is acceptable
  } catch (const FitError& e) {
    CHECK(e.best().terms().size() == 2);
    CHECK(e.rms() >= 0.0);
  }
}

TEST_CASE("samples CSV round trip and errors") {
  std::vector<double> grid{-0.5, 0.0, 0.25, 0.5};
  const auto s = synth_samples(1.0, 0.2, 0.1, grid, 0.0);
  const auto p = temp_file("samples.csv");
  write_samples_csv(p, s);
  const auto back = read_samples_csv(p);
  CHECK(back.positions == s.positions);
  CHECK(back.values == s.values);

  auto write = [&](const std::string& text) {
    std::ofstream(p) << text;
    return p;
  };
  CHECK_THROWS_AS(read_samples_csv(write("")), CsvError);
  CHECK_THROWS_AS(read_samples_csv(write("x,y\n0,1\n")), CsvError);
  try {
    read_samples_csv(write("xi,capacitance\n0,1\n0.1,abc\n"));
    FAIL("expected CsvError");
  } catch (const CsvError& e) {
    CHECK(e.line() == 3);
  }
  try {
    read_samples_csv(write("xi,capacitance\n0.2,1\n0.1,1\n"));
    FAIL("expected CsvError");
  } catch (const CsvError& e) {
    CHECK(e.line() == 3);
  }
  fs::remove(p);
}

TEST_CASE("model JSON round trip") {
  const CapacitanceModel m({{1.25, 0.3}, {-0.5, 1.5}}, 0.125);
  const auto back = model_from_json(model_to_json(m));
  REQUIRE(back.terms().size() == 2);
  CHECK(back.terms()[1].a == -0.5);
  CHECK(back.terms()[1].c == 1.5);
  CHECK(back.delta() == 0.125);
  CHECK_THROWS(model_from_json("{\"terms\":[]}"));
}

}
