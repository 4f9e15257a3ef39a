#pragma once

// Error-function capacitance model between a spherical particle and a square
// electrode, C(xi) = sum_i a_i [erf((xi + delta)/c_i) - erf((xi - delta)/c_i)],
// with delta the half electrode pitch.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "depshaper/diff/diff.hpp"
#include "depshaper/vec2.hpp"

namespace depshaper {

struct CapacitanceTerm {
  double a = 0.0;  // capacitance scale
  double c = 1.0;  // length scale, > 0
};

class CapacitanceModel {
public:
  CapacitanceModel() = default;
  CapacitanceModel(std::vector<CapacitanceTerm> terms, double delta);

  static CapacitanceModel single(double a, double c, double delta) { return CapacitanceModel({{a, c}}, delta); }

  /// Builds the single-term model whose Gaussian reading has width sigma.
  static CapacitanceModel from_sigma(double a, double sigma, double delta);

  const std::vector<CapacitanceTerm>& terms() const noexcept { return terms_; }
  double delta() const noexcept { return delta_; }

  /// Gaussian width c/sqrt(2) of the (first) term.
  double sigma() const;
  /// Capacitance scale a of the (first) term; feeds the optional energy scale.
  double scale() const;

private:
  std::vector<CapacitanceTerm> terms_;
  double delta_ = 1.0;
};

/// C(xi).  Generic over the scalar type so it can run under the AD engine.
template <class S>
S capacitance_1d(const CapacitanceModel& model, const S& xi) {
  S sum = 0.0;
  const double delta = model.delta();
  for (const auto& t : model.terms()) {
    const double inv_c = 1.0 / t.c;
    sum = sum + t.a * (math::erf((xi + delta) * inv_c) - math::erf((xi - delta) * inv_c));
  }
  return sum;
}

inline double eval_1d(const CapacitanceModel& model, double xi) { return capacitance_1d(model, xi); }

/// Softening length added in quadrature to electrode distances so the radial
/// map stays differentiable at zero separation.
inline double radial_softening(const CapacitanceModel& model) { return 1e-9 * model.delta(); }

/// Radial 2D extension C(|x - y|).
template <class S>
S capacitance_2d(const CapacitanceModel& model, const Vec2<S>& x, const Vec2d& electrode) {
  const S d1 = x.x1 - electrode.x1;
  const S d2 = x.x2 - electrode.x2;
  const double eps = radial_softening(model);
  const S r = math::sqrt(d1 * d1 + d2 * d2 + eps * eps);
  return capacitance_1d(model, r);
}

inline double eval_2d(const CapacitanceModel& model, const Vec2d& x, const Vec2d& electrode) {
  return capacitance_2d(model, x, electrode);
}

struct CapacitanceSamples {
  std::vector<double> positions;
  std::vector<double> values;
  // Generator parameters when produced by synth_samples.
  bool synthetic = false;
  double gen_a = 0.0;
  double gen_c = 0.0;
  double gen_delta = 0.0;
  double gen_noise_rel = 0.0;
  std::uint64_t gen_seed = 0;

  void validate() const;
};

/// Single-term samples on `grid`, optionally with zero-mean relative Gaussian
/// noise drawn from a fixed-seed generator.
CapacitanceSamples synth_samples(double a, double c, double delta, std::span<const double> grid, double noise_rel,
                                 std::uint64_t seed = 20240501);

struct FitOptions {
  int max_iterations = 500;
  double tolerance = 1e-14;  // relative SSR decrease that counts as converged
};

struct FitResult {
  CapacitanceModel model;
  double rms = 0.0;
  int iterations = 0;
};

class FitError : public std::runtime_error {
public:
  FitError(const std::string& what, CapacitanceModel best, double rms)
      : std::runtime_error(what), best_(std::move(best)), rms_(rms) {}
  const CapacitanceModel& best() const noexcept { return best_; }
  double rms() const noexcept { return rms_; }

private:
  CapacitanceModel best_;
  double rms_;
};

/// Levenberg-Marquardt least squares over (a_i, log c_i) with delta fixed.
/// Jacobians come from forward-mode duals.
FitResult fit(const CapacitanceSamples& samples, int terms, double delta, const FitOptions& options = {});

// CSV with header `xi,capacitance`.
CapacitanceSamples read_samples_csv(const std::filesystem::path& path);
void write_samples_csv(const std::filesystem::path& path, const CapacitanceSamples& samples);

// {"terms":[{"a":..,"c":..}],"delta":..}
std::string model_to_json(const CapacitanceModel& model);
CapacitanceModel model_from_json(const std::string& text);

/// Thrown by read_samples_csv with the offending 1-based line number.
class CsvError : public std::runtime_error {
public:
  CsvError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace depshaper
