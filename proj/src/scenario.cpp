#include "depshaper/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace depshaper {

namespace {

using nlohmann::json;

std::string escape(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Reader {
public:
  Reader(const json& j, std::string pointer) : j_(j), ptr_(std::move(pointer)) {
    if (!j_.is_object()) throw ScenarioError(ptr_.empty() ? "/" : ptr_, "expected an object");
  }

  std::string at(const std::string& key) const { return ptr_ + "/" + escape(key); }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ScenarioError(at(key), "missing required key");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) throw ScenarioError(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ScenarioError(at(key), "expected a finite number");
    return d;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  double positive(const std::string& key) {
    const double d = number(key);
    if (!(d > 0.0)) throw ScenarioError(at(key), "must be positive");
    return d;
  }
  double positive(const std::string& key, double fallback) { return has(key) ? positive(key) : fallback; }

  double nonnegative(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const double d = number(key);
    if (!(d >= 0.0)) throw ScenarioError(at(key), "must be nonnegative");
    return d;
  }

  int integer(const std::string& key, int lo) {
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ScenarioError(at(key), "expected an integer");
    const auto i = v.get<long long>();
    if (i < lo || i > 100000000) throw ScenarioError(at(key), "must be an integer >= " + std::to_string(lo));
    return static_cast<int>(i);
  }
  int integer(const std::string& key, int lo, int fallback) { return has(key) ? integer(key, lo) : fallback; }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) throw ScenarioError(at(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ScenarioError(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) throw ScenarioError(at(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) throw ScenarioError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ScenarioError(at(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  Vec2d pair(const std::string& key) {
    const auto v = numbers(key);
    if (v.size() != 2) throw ScenarioError(at(key), "expected two numbers");
    return {v[0], v[1]};
  }
  Vec2d pair(const std::string& key, Vec2d fallback) { return has(key) ? pair(key) : fallback; }

  Reader child(const std::string& key) { return Reader(raw(key), at(key)); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ScenarioError(at(it.key()), "unknown key");
    }
  }

private:
  const json& j_;
  std::string ptr_;
  std::set<std::string> used_;
};

Box read_box(Reader r) {
  Box b{r.number("x1_min"), r.number("x1_max"), r.number("x2_min"), r.number("x2_max")};
  if (!(b.x1_max > b.x1_min)) throw ScenarioError(r.at("x1_max"), "must exceed x1_min");
  if (!(b.x2_max > b.x2_min)) throw ScenarioError(r.at("x2_max"), "must exceed x2_min");
  r.finish();
  return b;
}

std::vector<Vec2d> read_particles(Reader r, const Box& domain, std::uint64_t seed) {
  const std::string layout = r.string("layout", "grid");
  std::vector<Vec2d> x;
  if (layout == "grid") {
    const int n1 = r.integer("nx1", 1);
    const int n2 = r.integer("nx2", 1);
    // Cell-centred lattice over the region (default: the domain).
    const Box region = r.has("region_mm") ? read_box(r.child("region_mm")) : domain;
    const double d1 = (region.x1_max - region.x1_min) / n1;
    const double d2 = (region.x2_max - region.x2_min) / n2;
    for (int i2 = 0; i2 < n2; ++i2) {
      for (int i1 = 0; i1 < n1; ++i1) x.push_back({region.x1_min + (i1 + 0.5) * d1, region.x2_min + (i2 + 0.5) * d2});
    }
  } else if (layout == "random") {
    const int n = r.integer("count", 1);
    const Box region = r.has("region_mm") ? read_box(r.child("region_mm")) : domain;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u1(region.x1_min, region.x1_max);
    std::uniform_real_distribution<double> u2(region.x2_min, region.x2_max);
    for (int l = 0; l < n; ++l) {
      const double a = u1(rng);
      x.push_back({a, u2(rng)});
    }
  } else if (layout == "explicit") {
    const json& pts = r.raw("positions_mm");
    if (!pts.is_array() || pts.empty()) throw ScenarioError(r.at("positions_mm"), "expected a nonempty array");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto p = r.at("positions_mm") + "/" + std::to_string(i);
      if (!pts[i].is_array() || pts[i].size() != 2 || !pts[i][0].is_number() || !pts[i][1].is_number()) {
        throw ScenarioError(p, "expected [x1, x2]");
      }
      x.push_back({pts[i][0].get<double>(), pts[i][1].get<double>()});
    }
  } else {
    throw ScenarioError(r.at("layout"), "expected \"grid\", \"random\" or \"explicit\"");
  }
  for (std::size_t l = 0; l < x.size(); ++l) {
    if (!domain.contains(x[l])) throw ScenarioError(r.at("layout"), "particle " + std::to_string(l) + " outside the domain");
  }
  r.finish();
  return x;
}

}  // namespace

const char* mode_name(SolverMode mode) {
  return mode == SolverMode::ContinuousMap ? "continuous" : "collocation";
}

std::vector<double> default_snapshot_times(double horizon) {
  const double base[4] = {0.0, 1.5, 3.0, 4.95};
  std::vector<double> t;
  for (double b : base) t.push_back(b / 5.0 * horizon);
  return t;
}

Scenario parse_scenario(const std::string& text, std::optional<std::uint64_t> seed_override) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError("/", std::string("invalid JSON: ") + e.what());
  }
  Scenario s;
  Reader r(doc, "");
  s.name = r.string("name", "scenario");
  s.seed = r.u64("seed", 1);
  if (seed_override) s.seed = *seed_override;
  const std::string mode = r.string("mode", "continuous");
  if (mode == "continuous") s.mode = SolverMode::ContinuousMap;
  else if (mode == "collocation") s.mode = SolverMode::DiscreteCollocation;
  else throw ScenarioError(r.at("mode"), "expected \"continuous\" or \"collocation\"");
  s.deterministic = r.boolean("deterministic", true);
  s.output_dir = r.string("output_dir", "out");

  auto& p = s.problem;
  p.domain = read_box(r.child("domain_mm"));
  p.horizon = r.positive("horizon_s");
  if (r.has("times_s")) {
    p.times = r.numbers("times_s");
    if (p.times.size() < 2) throw ScenarioError(r.at("times_s"), "need at least two samples");
    if (p.times.front() != 0.0) throw ScenarioError(r.at("times_s") + "/0", "first sample must be 0");
    for (std::size_t k = 1; k < p.times.size(); ++k) {
      if (!(p.times[k] > p.times[k - 1])) {
        throw ScenarioError(r.at("times_s") + "/" + std::to_string(k), "time samples must be strictly increasing");
      }
    }
    if (std::fabs(p.times.back() - p.horizon) > 1e-12 * p.horizon) {
      throw ScenarioError(r.at("times_s"), "last sample must equal horizon_s");
    }
  } else {
    p.times = ControlProblem::uniform_times(p.horizon, r.integer("time_samples", 2));
  }

  const double v_max = r.positive("v_max_V");
  {
    Reader e = r.child("electrodes");
    const int n1 = e.integer("nx1", 1);
    const int n2 = e.integer("nx2", 1);
    const double pitch = e.positive("pitch_mm");
    const Vec2d c = e.pair("center_mm", {0.5 * (p.domain.x1_min + p.domain.x1_max), 0.5 * (p.domain.x2_min + p.domain.x2_max)});
    e.finish();
    p.array = ElectrodeArray::grid(n1, n2, pitch, v_max, c);
  }
  {
    Reader c = r.child("capacitance");
    const double delta = c.positive("delta_mm", 0.5 * p.array.pitch);
    std::vector<CapacitanceTerm> terms;
    if (c.has("terms")) {
      const json& t = c.raw("terms");
      if (!t.is_array() || t.empty()) throw ScenarioError(c.at("terms"), "expected a nonempty array");
      for (std::size_t i = 0; i < t.size(); ++i) {
        Reader ti(t[i], c.at("terms") + "/" + std::to_string(i));
        terms.push_back({ti.number("a"), ti.positive("c_mm")});
        ti.finish();
      }
    } else {
      terms.push_back({c.number("a", 1.0), c.positive("sigma_mm") * std::sqrt(2.0)});
    }
    c.finish();
    p.cap = CapacitanceModel(terms, delta);
  }
  {
    Reader f = r.child("field");
    p.consts.mu = f.positive("mu", 1.0);
    p.consts.sigma = f.positive("sigma_mm", p.cap.sigma());
    p.consts.energy_scale = f.positive("energy_scale", 1.0);
    p.consts.gh_order = f.integer("gh_order", 2, 30);
    if (p.consts.gh_order > kMaxGaussHermiteOrder) throw ScenarioError(f.at("gh_order"), "at most 64");
    f.finish();
  }
  p.x0 = read_particles(r.child("particles"), p.domain, s.seed);

  {
    Reader g = r.child("loss_grid");
    const int n1 = g.integer("nx1", 1);
    const int n2 = g.integer("nx2", 1);
    g.finish();
    p.target = DensityGrid::make(p.domain.x1_min, p.domain.x1_max, p.domain.x2_min, p.domain.x2_max, n1, n2);
  }
  double target_sigma = 0.0;
  {
    Reader t = r.child("target");
    const std::string kind = t.string("kind", "gaussian");
    if (kind != "gaussian") throw ScenarioError(t.at("kind"), "only \"gaussian\" targets are supported");
    target_sigma = t.positive("sigma_mm");
    const Vec2d mean = t.pair("mean_mm", {0.5 * (p.domain.x1_min + p.domain.x1_max), 0.5 * (p.domain.x2_min + p.domain.x2_max)});
    t.finish();
    p.target = gaussian_target(mean, target_sigma, p.target);
    if (std::fabs(p.target.mass() - 1.0) > 0.05) {
      throw ScenarioError(r.at("target"), "target mass on the loss grid is " + std::to_string(p.target.mass()) +
                                              "; keep the Gaussian inside the domain");
    }
  }
  if (r.has("bandwidth")) {
    Reader b = r.child("bandwidth");
    const std::string kind = b.string("kind", "silverman");
    if (kind == "silverman") {
      p.bandwidth = silverman_bandwidth(b.positive("sigma_mm", target_sigma), p.x0.size());
    } else if (kind == "fixed") {
      p.bandwidth = {b.positive("h1_mm"), b.positive("h2_mm")};
    } else {
      throw ScenarioError(b.at("kind"), "expected \"silverman\" or \"fixed\"");
    }
    b.finish();
  } else {
    p.bandwidth = silverman_bandwidth(target_sigma, p.x0.size());
  }
  if (r.has("residual")) {
    Reader q = r.child("residual");
    p.residual_tol = q.positive("tol", p.residual_tol);
    p.residual_multiplier = q.positive("multiplier", 1.0);
    s.train.residual_warn_factor = q.positive("warn_factor", s.train.residual_warn_factor);
    q.finish();
  }
  p.box_penalty = r.nonnegative("box_penalty", p.box_penalty);

  if (r.has("networks")) {
    Reader n = r.child("networks");
    s.trajectory_hidden = n.integer("trajectory_hidden", 1, s.trajectory_hidden);
    s.potential_hidden = n.integer("potential_hidden", 1, s.potential_hidden);
    s.trajectory_init_scale = n.nonnegative("trajectory_init_scale", s.trajectory_init_scale);
    s.potential_init_scale = n.nonnegative("potential_init_scale", s.potential_init_scale);
    n.finish();
  }
  {
    Reader o = r.child("optimizer");
    s.train.max_iterations = o.integer("iterations", 0);
    s.train.adam.lr = o.positive("learning_rate", s.train.adam.lr);
    s.train.adam.beta1 = o.nonnegative("beta1", s.train.adam.beta1);
    s.train.adam.beta2 = o.nonnegative("beta2", s.train.adam.beta2);
    s.train.adam.eps = o.positive("eps", s.train.adam.eps);
    if (!(s.train.adam.beta1 < 1.0)) throw ScenarioError(o.at("beta1"), "must be < 1");
    if (!(s.train.adam.beta2 < 1.0)) throw ScenarioError(o.at("beta2"), "must be < 1");
    s.train.history_stride = o.integer("history_stride", 1, s.train.history_stride);
    o.finish();
  }
  {
    Reader d = r.child("dual");
    s.train.lambda0 = d.nonnegative("lambda0", s.train.lambda0);
    s.train.alpha = d.positive("alpha");
    s.train.dual_interval = d.integer("interval", 1, s.train.dual_interval);
    d.finish();
  }
  s.rollout_substeps = r.integer("rollout_substeps", 1, s.rollout_substeps);
  if (r.has("snapshot_times_s")) {
    s.snapshot_times = r.numbers("snapshot_times_s");
    for (std::size_t i = 0; i < s.snapshot_times.size(); ++i) {
      const double t = s.snapshot_times[i];
      if (t < 0.0 || t > p.horizon) {
        throw ScenarioError(r.at("snapshot_times_s") + "/" + std::to_string(i), "outside [0, horizon_s]");
      }
    }
  } else {
    s.snapshot_times = default_snapshot_times(p.horizon);
  }
  r.finish();

  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("/", e.what());
  }
  s.canonical = doc.dump();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("/", "cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), seed_override);
}

std::string scenario_hash(const Scenario& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s.canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace depshaper
