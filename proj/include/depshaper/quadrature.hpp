#pragma once

#include <vector>

namespace depshaper {

/// Gauss-Hermite rule for the weight exp(-y^2) on the real line.
struct GHRule {
  int order = 0;
  std::vector<double> nodes;    // roots of H_n, strictly increasing
  std::vector<double> weights;  // positive, sum to sqrt(pi)
};

inline constexpr int kMaxGaussHermiteOrder = 64;

/// Nodes by Newton iteration on the orthonormal Hermite recurrence; weights
/// are 2^{n-1} n! sqrt(pi) / (n^2 H_{n-1}(y)^2), evaluated in normalized form
/// (= 1 / (n h_{n-1}(y)^2) with h_k the orthonormal Hermite functions) so no
/// factorials appear.  Throws std::invalid_argument outside 1..64.
GHRule gauss_hermite(int n);

}  // namespace depshaper
