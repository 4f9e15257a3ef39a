#pragma once

// One-hidden-layer tanh networks:
//   out = transform(W2 tanh(W1 in + b1) + b2)
// used for the potential map V(y, t) and the particle trajectory bundle.
//
// Parameter layout (flat): W1 [hidden x in, row-major] | b1 [hidden] |
// W2 [out x hidden, row-major] | b2 [out].

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "depshaper/diff/diff.hpp"
#include "depshaper/vec2.hpp"

namespace depshaper {

enum class OutputKind { Identity, Clip, Box };

struct OutputTransform {
  OutputKind kind = OutputKind::Identity;
  double gain = 1.0;       // applied before clipping
  double bound = 0.0;      // Clip: |out| <= bound
  std::vector<double> lo;  // Box: per-output bounds
  std::vector<double> hi;
};

class Mlp {
public:
  Mlp() = default;
  Mlp(int in_dim, int hidden_dim, int out_dim, OutputTransform transform = {});

  int in_dim() const noexcept { return in_; }
  int hidden_dim() const noexcept { return hidden_; }
  int out_dim() const noexcept { return out_; }
  const OutputTransform& transform() const noexcept { return transform_; }

  std::size_t param_count() const noexcept { return params_.size(); }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  std::size_t w1_offset() const noexcept { return 0; }
  std::size_t b1_offset() const noexcept { return static_cast<std::size_t>(hidden_) * in_; }
  std::size_t w2_offset() const noexcept { return b1_offset() + hidden_; }
  std::size_t b2_offset() const noexcept { return w2_offset() + static_cast<std::size_t>(out_) * hidden_; }

  /// Pre-transform output with externally supplied parameters of type P.
  template <class S, class P>
  void evaluate_raw(std::span<const P> p, std::span<const S> in, std::span<S> out) const {
    std::vector<S> act(hidden_);
    for (int h = 0; h < hidden_; ++h) {
      S pre = static_cast<S>(p[b1_offset() + h]);
      for (int d = 0; d < in_; ++d) pre = pre + p[w1_offset() + h * in_ + d] * in[d];
      act[h] = math::tanh(pre);
    }
    for (int o = 0; o < out_; ++o) {
      S acc = static_cast<S>(p[b2_offset() + o]);
      for (int h = 0; h < hidden_; ++h) acc = acc + p[w2_offset() + o * hidden_ + h] * act[h];
      out[o] = acc;
    }
  }

  template <class S>
  void apply_transform(std::span<S> out) const {
    for (int o = 0; o < out_; ++o) {
      S y = transform_.gain == 1.0 ? out[o] : transform_.gain * out[o];
      switch (transform_.kind) {
        case OutputKind::Identity:
          break;
        case OutputKind::Clip:
          if (math::primal(y) > transform_.bound) y = S(transform_.bound);
          else if (math::primal(y) < -transform_.bound) y = S(-transform_.bound);
          break;
        case OutputKind::Box:
          if (math::primal(y) > transform_.hi[o]) y = S(transform_.hi[o]);
          else if (math::primal(y) < transform_.lo[o]) y = S(transform_.lo[o]);
          break;
      }
      out[o] = y;
    }
  }

  template <class S, class P>
  void evaluate(std::span<const P> p, std::span<const S> in, std::span<S> out) const {
    evaluate_raw(p, in, out);
    apply_transform(out);
  }

  /// Single-row forward pass with the network's own parameters.
  std::vector<double> forward(std::span<const double> in) const;

  /// Batched forward pass; `inputs` holds rows of width in_dim.  Rows are
  /// evaluated independently (in parallel) and equal single-row results bit
  /// for bit.
  std::vector<double> forward_batch(std::span<const double> inputs) const;

  /// d(raw output)/d(input[0]) via forward-mode duals: the time derivative of
  /// a trajectory network, taken before any output projection.
  std::vector<double> time_derivative(double t) const;

private:
  int in_ = 0;
  int hidden_ = 0;
  int out_ = 0;
  OutputTransform transform_;
  std::vector<double> params_;
};

/// Uniform(-s, s) weights with s = 1/sqrt(fan_in) for each layer, fixed seed.
Mlp init_mlp(int in_dim, int hidden_dim, int out_dim, std::uint64_t seed, OutputTransform transform = {});

/// Sets b2 so that the raw output at input 0 equals `targets` exactly.
/// Returns the max absolute error after calibration.
double prefit_at_zero(Mlp& net, std::span<const double> targets);

/// Multiplies the output-layer weights (W2 and b2) by `factor`.
void scale_output_layer(Mlp& net, double factor);

/// Potential map V(y, t): inputs (y1, y2, t) normalized to [-1, 1]^3, output
/// scaled by v_max and hard-clipped to +-v_max.
class PotentialMap {
public:
  PotentialMap() = default;
  PotentialMap(Mlp net, double x1_min, double x1_max, double x2_min, double x2_max, double horizon, double v_max);

  static PotentialMap create(int hidden, std::uint64_t seed, double x1_min, double x1_max, double x2_min,
                             double x2_max, double horizon, double v_max);

  const Mlp& net() const noexcept { return net_; }
  Mlp& net() noexcept { return net_; }
  double v_max() const noexcept { return v_max_; }
  double horizon() const noexcept { return horizon_; }

  // Input normalization u = scale * y + shift.
  double scale(int d) const noexcept { return scale_[d]; }
  double shift(int d) const noexcept { return shift_[d]; }
  double x1_min() const noexcept { return x1_min_; }
  double x1_max() const noexcept { return x1_max_; }
  double x2_min() const noexcept { return x2_min_; }
  double x2_max() const noexcept { return x2_max_; }

  template <class S, class P>
  S value(std::span<const P> p, const S& y1, const S& y2, double t) const {
    const S in[3] = {scale_[0] * y1 + shift_[0], scale_[1] * y2 + shift_[1], S(scale_[2] * t + shift_[2])};
    S out[1];
    net_.evaluate(p, std::span<const S>(in, 3), std::span<S>(out, 1));
    return out[0];
  }

  double value(double y1, double y2, double t) const {
    return value<double, double>(net_.params(), y1, y2, t);
  }

private:
  Mlp net_;
  double x1_min_ = -1, x1_max_ = 1, x2_min_ = -1, x2_max_ = 1;
  double horizon_ = 1.0;
  double v_max_ = 1.0;
  double scale_[3] = {1, 1, 1};
  double shift_[3] = {0, 0, 0};
};

/// Particle trajectories Z(t) = [x^(1) .. x^(n)] as two networks (one per
/// axis), each 1 -> hidden -> n with time input t / T.  Positions are
/// anchored to the initial conditions:  x(t) = x0 + net(t/T) - net(0).
class TrajectoryBundle {
public:
  TrajectoryBundle() = default;
  TrajectoryBundle(Mlp axis1, Mlp axis2, std::vector<Vec2d> x0, double horizon);

  static TrajectoryBundle create(std::span<const Vec2d> x0, int hidden, std::uint64_t seed, double horizon,
                                 double output_init_scale);

  std::size_t particle_count() const noexcept { return x0_.size(); }
  double horizon() const noexcept { return horizon_; }
  const std::vector<Vec2d>& initial_positions() const noexcept { return x0_; }
  const Mlp& axis(int a) const noexcept { return axis_[a]; }
  Mlp& axis(int a) noexcept { return axis_[a]; }

  std::vector<Vec2d> positions(double t) const;
  std::vector<Vec2d> velocities(double t) const;

private:
  Mlp axis_[2];
  std::vector<Vec2d> x0_;
  double horizon_ = 1.0;
};

// Checkpoint JSON: shape metadata plus flat parameter arrays.
struct NamedNet {
  std::string name;
  Mlp net;
};
std::string checkpoint_to_json(const std::vector<NamedNet>& nets);
std::vector<NamedNet> checkpoint_from_json(const std::string& text);

}  // namespace depshaper
