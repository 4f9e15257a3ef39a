#include "depshaper/nnmap.hpp"

#include <random>

#include <json.hpp>

namespace depshaper {

Mlp::Mlp(int in_dim, int hidden_dim, int out_dim, OutputTransform transform)
    : in_(in_dim), hidden_(hidden_dim), out_(out_dim), transform_(std::move(transform)) {
  if (in_dim <= 0 || hidden_dim <= 0 || out_dim <= 0) {
    throw std::invalid_argument("Mlp: layer sizes must be positive");
  }
  if (transform_.kind == OutputKind::Box &&
      (transform_.lo.size() != static_cast<std::size_t>(out_) || transform_.hi.size() != transform_.lo.size())) {
    throw std::invalid_argument("Mlp: box transform needs one bound pair per output");
  }
  params_.assign(static_cast<std::size_t>(hidden_) * (in_ + 1) + static_cast<std::size_t>(out_) * (hidden_ + 1), 0.0);
}

std::vector<double> Mlp::forward(std::span<const double> in) const {
  if (in.size() != static_cast<std::size_t>(in_)) {
    throw std::invalid_argument("Mlp::forward: input width " + std::to_string(in.size()) + " != " +
                                std::to_string(in_));
  }
  std::vector<double> out(out_);
  evaluate<double, double>(params_, in, std::span<double>(out));
  return out;
}

std::vector<double> Mlp::forward_batch(std::span<const double> inputs) const {
  if (inputs.size() % static_cast<std::size_t>(in_) != 0) {
    throw std::invalid_argument("Mlp::forward_batch: input size is not a multiple of in_dim");
  }
  const auto rows = static_cast<std::ptrdiff_t>(inputs.size() / in_);
  std::vector<double> out(static_cast<std::size_t>(rows) * out_);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    evaluate<double, double>(params_, inputs.subspan(r * in_, in_), std::span<double>(out).subspan(r * out_, out_));
  }
  return out;
}

std::vector<double> Mlp::time_derivative(double t) const {
  if (in_ != 1) throw std::invalid_argument("Mlp::time_derivative: network input must be scalar time");
  const double x[1] = {t};
  const double v[1] = {1.0};
  return diff::jvp_vector<double>(
      [this](std::span<const diff::Dual<double, 1>> in) {
        std::vector<diff::Dual<double, 1>> out(out_);
        evaluate_raw<diff::Dual<double, 1>, double>(params_, in, std::span<diff::Dual<double, 1>>(out));
        return out;
      },
      std::span<const double>(x, 1), std::span<const double>(v, 1));
}

Mlp init_mlp(int in_dim, int hidden_dim, int out_dim, std::uint64_t seed, OutputTransform transform) {
  Mlp net(in_dim, hidden_dim, out_dim, std::move(transform));
  std::mt19937_64 rng(seed);
  auto p = net.params();
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::uniform_real_distribution<double> u1(-s1, s1);
  std::uniform_real_distribution<double> u2(-s2, s2);
  for (std::size_t i = net.w1_offset(); i < net.w2_offset(); ++i) p[i] = u1(rng);
  for (std::size_t i = net.w2_offset(); i < p.size(); ++i) p[i] = u2(rng);
  return net;
}

double prefit_at_zero(Mlp& net, std::span<const double> targets) {
  if (targets.size() != static_cast<std::size_t>(net.out_dim())) {
    throw std::invalid_argument("prefit_at_zero: target count must equal out_dim");
  }
  auto p = net.params();
  const int hidden = net.hidden_dim();
  std::vector<double> act(hidden);
  for (int h = 0; h < hidden; ++h) act[h] = std::tanh(p[net.b1_offset() + h]);
  for (int o = 0; o < net.out_dim(); ++o) {
    double acc = 0.0;
    for (int h = 0; h < hidden; ++h) acc += p[net.w2_offset() + o * hidden + h] * act[h];
    p[net.b2_offset() + o] = targets[o] - acc;
  }
  const std::vector<double> zero(net.in_dim(), 0.0);
  std::vector<double> out(net.out_dim());
  net.evaluate_raw<double, double>(net.params(), zero, std::span<double>(out));
  double err = 0.0;
  for (int o = 0; o < net.out_dim(); ++o) err = std::max(err, std::fabs(out[o] - targets[o]));
  return err;
}

void scale_output_layer(Mlp& net, double factor) {
  auto p = net.params();
  for (std::size_t i = net.w2_offset(); i < p.size(); ++i) p[i] *= factor;
}

// --- PotentialMap -------------------------------------------------------------

PotentialMap::PotentialMap(Mlp net, double x1_min, double x1_max, double x2_min, double x2_max, double horizon,
                           double v_max)
    : net_(std::move(net)), x1_min_(x1_min), x1_max_(x1_max), x2_min_(x2_min), x2_max_(x2_max), horizon_(horizon),
      v_max_(v_max) {
  if (net_.in_dim() != 3 || net_.out_dim() != 1) throw std::invalid_argument("PotentialMap: network must be 3 -> 1");
  if (!(x1_max > x1_min) || !(x2_max > x2_min) || !(horizon > 0.0) || !(v_max > 0.0)) {
    throw std::invalid_argument("PotentialMap: invalid domain, horizon or v_max");
  }
  scale_[0] = 2.0 / (x1_max - x1_min);
  shift_[0] = -(x1_max + x1_min) / (x1_max - x1_min);
  scale_[1] = 2.0 / (x2_max - x2_min);
  shift_[1] = -(x2_max + x2_min) / (x2_max - x2_min);
  scale_[2] = 2.0 / horizon;
  shift_[2] = -1.0;
}

PotentialMap PotentialMap::create(int hidden, std::uint64_t seed, double x1_min, double x1_max, double x2_min,
                                  double x2_max, double horizon, double v_max) {
  OutputTransform tf;
  tf.kind = OutputKind::Clip;
  tf.gain = v_max;
  tf.bound = v_max;
  return PotentialMap(init_mlp(3, hidden, 1, seed, tf), x1_min, x1_max, x2_min, x2_max, horizon, v_max);
}

// --- TrajectoryBundle ---------------------------------------------------------

TrajectoryBundle::TrajectoryBundle(Mlp axis1, Mlp axis2, std::vector<Vec2d> x0, double horizon)
    : axis_{std::move(axis1), std::move(axis2)}, x0_(std::move(x0)), horizon_(horizon) {
  for (const auto& net : axis_) {
    if (net.in_dim() != 1 || net.out_dim() != static_cast<int>(x0_.size())) {
      throw std::invalid_argument("TrajectoryBundle: each axis network must be 1 -> n");
    }
  }
  if (!(horizon > 0.0)) throw std::invalid_argument("TrajectoryBundle: horizon must be positive");
}

TrajectoryBundle TrajectoryBundle::create(std::span<const Vec2d> x0, int hidden, std::uint64_t seed, double horizon,
                                          double output_init_scale) {
  const int n = static_cast<int>(x0.size());
  Mlp a1 = init_mlp(1, hidden, n, seed);
  Mlp a2 = init_mlp(1, hidden, n, seed + 1);
  scale_output_layer(a1, output_init_scale);
  scale_output_layer(a2, output_init_scale);
  std::vector<double> t1(n);
  std::vector<double> t2(n);
  for (int l = 0; l < n; ++l) {
    t1[l] = x0[l].x1;
    t2[l] = x0[l].x2;
  }
  prefit_at_zero(a1, t1);
  prefit_at_zero(a2, t2);
  return TrajectoryBundle(std::move(a1), std::move(a2), std::vector<Vec2d>(x0.begin(), x0.end()), horizon);
}

std::vector<Vec2d> TrajectoryBundle::positions(double t) const {
  const double tau[1] = {t / horizon_};
  const double zero[1] = {0.0};
  const auto z1 = axis_[0].forward(tau);
  const auto z2 = axis_[1].forward(tau);
  const auto z10 = axis_[0].forward(zero);
  const auto z20 = axis_[1].forward(zero);
  std::vector<Vec2d> x(x0_.size());
  for (std::size_t l = 0; l < x0_.size(); ++l) {
    x[l] = {x0_[l].x1 + z1[l] - z10[l], x0_[l].x2 + z2[l] - z20[l]};
  }
  return x;
}

std::vector<Vec2d> TrajectoryBundle::velocities(double t) const {
  const auto d1 = axis_[0].time_derivative(t / horizon_);
  const auto d2 = axis_[1].time_derivative(t / horizon_);
  std::vector<Vec2d> v(x0_.size());
  for (std::size_t l = 0; l < x0_.size(); ++l) v[l] = {d1[l] / horizon_, d2[l] / horizon_};
  return v;
}

// --- checkpoints ----------------------------------------------------------------

namespace {

const char* kind_name(OutputKind k) {
  switch (k) {
    case OutputKind::Identity: return "identity";
    case OutputKind::Clip: return "clip";
    case OutputKind::Box: return "box";
  }
  return "identity";
}

OutputKind kind_from(const std::string& s) {
  if (s == "identity") return OutputKind::Identity;
  if (s == "clip") return OutputKind::Clip;
  if (s == "box") return OutputKind::Box;
  throw std::invalid_argument("checkpoint: unknown output transform '" + s + "'");
}

}  // namespace

std::string checkpoint_to_json(const std::vector<NamedNet>& nets) {
  nlohmann::json j;
  j["format"] = "depshaper-checkpoint";
  j["version"] = 1;
  j["nets"] = nlohmann::json::array();
  for (const auto& [name, net] : nets) {
    const auto& tf = net.transform();
    nlohmann::json e;
    e["name"] = name;
    e["in_dim"] = net.in_dim();
    e["hidden_dim"] = net.hidden_dim();
    e["out_dim"] = net.out_dim();
    e["transform"] = {{"kind", kind_name(tf.kind)}, {"gain", tf.gain}, {"bound", tf.bound}, {"lo", tf.lo},
                      {"hi", tf.hi}};
    e["params"] = std::vector<double>(net.params().begin(), net.params().end());
    j["nets"].push_back(std::move(e));
  }
  return j.dump();
}

std::vector<NamedNet> checkpoint_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", std::string()) != "depshaper-checkpoint") {
    throw std::invalid_argument("checkpoint: not a depshaper checkpoint");
  }
  std::vector<NamedNet> nets;
  for (const auto& e : j.at("nets")) {
    OutputTransform tf;
    const auto& t = e.at("transform");
    tf.kind = kind_from(t.at("kind").get<std::string>());
    tf.gain = t.at("gain").get<double>();
    tf.bound = t.at("bound").get<double>();
    tf.lo = t.at("lo").get<std::vector<double>>();
    tf.hi = t.at("hi").get<std::vector<double>>();
    Mlp net(e.at("in_dim").get<int>(), e.at("hidden_dim").get<int>(), e.at("out_dim").get<int>(), tf);
    const auto params = e.at("params").get<std::vector<double>>();
    if (params.size() != net.param_count()) throw std::invalid_argument("checkpoint: parameter count mismatch");
    std::copy(params.begin(), params.end(), net.params().begin());
    nets.push_back({e.at("name").get<std::string>(), std::move(net)});
  }
  return nets;
}

}  // namespace depshaper
