#include "depshaper/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace depshaper {

namespace {

constexpr double kPiQuarterInv = 0.7511255444649425;  // pi^{-1/4}

// Orthonormal Hermite values h_n(y) and h_{n-1}(y).
void hermite_normalized(int n, double y, double& hn, double& hn1) {
  double p0 = kPiQuarterInv;
  double p1 = std::sqrt(2.0) * y * p0;
  if (n == 0) {
    hn = p0;
    hn1 = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    const double p2 = std::sqrt(2.0 / k) * y * p1 - std::sqrt((k - 1.0) / k) * p0;
    p0 = p1;
    p1 = p2;
  }
  hn = p1;
  hn1 = p0;
}

}  // namespace

GHRule gauss_hermite(int n) {
  if (n < 1 || n > kMaxGaussHermiteOrder) {
    throw std::invalid_argument("gauss_hermite: order must be in [1, 64], got " + std::to_string(n));
  }
  GHRule rule;
  rule.order = n;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);

  const int half = (n + 1) / 2;
  std::vector<double> roots(half, 0.0);  // decreasing positive roots (and 0 for odd n)
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    // Asymptotic initial guesses for the largest roots, then extrapolation.
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * roots[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * roots[1];
    } else {
      z = 2.0 * z - roots[i - 2];
    }
    for (int it = 0; it < 100; ++it) {
      double hn = 0.0;
      double hn1 = 0.0;
      hermite_normalized(n, z, hn, hn1);
      const double dz = hn / (std::sqrt(2.0 * n) * hn1);
      z -= dz;
      if (std::fabs(dz) <= 1e-15 * std::fmax(1.0, std::fabs(z))) break;
    }
    roots[i] = z;
  }
  if (n % 2 == 1) roots[half - 1] = 0.0;

  for (int i = 0; i < half; ++i) {
    double hn = 0.0;
    double hn1 = 0.0;
    hermite_normalized(n, roots[i], hn, hn1);
    const double w = 1.0 / (n * hn1 * hn1);
    rule.nodes[i] = -roots[i];
    rule.nodes[n - 1 - i] = roots[i];
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[half - 1] = 0.0;
  return rule;
}

}  // namespace depshaper
