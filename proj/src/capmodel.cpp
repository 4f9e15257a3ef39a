#include "depshaper/capmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

namespace depshaper {

CapacitanceModel::CapacitanceModel(std::vector<CapacitanceTerm> terms, double delta)
    : terms_(std::move(terms)), delta_(delta) {
  if (terms_.empty()) throw std::invalid_argument("CapacitanceModel: at least one term required");
  if (!(delta_ > 0.0)) throw std::invalid_argument("CapacitanceModel: delta must be positive");
  for (const auto& t : terms_) {
    if (!(t.c > 0.0) || !std::isfinite(t.c) || !std::isfinite(t.a)) {
      throw std::invalid_argument("CapacitanceModel: every length scale c must be positive and finite");
    }
  }
}

CapacitanceModel CapacitanceModel::from_sigma(double a, double sigma, double delta) {
  return single(a, sigma * std::sqrt(2.0), delta);
}

double CapacitanceModel::sigma() const { return terms_.front().c / std::sqrt(2.0); }

double CapacitanceModel::scale() const { return terms_.front().a; }

void CapacitanceSamples::validate() const {
  if (positions.size() != values.size()) throw std::invalid_argument("capacitance samples: length mismatch");
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (!(positions[i] > positions[i - 1])) {
      throw std::invalid_argument("capacitance samples: positions must be strictly increasing");
    }
  }
}

CapacitanceSamples synth_samples(double a, double c, double delta, std::span<const double> grid, double noise_rel,
                                 std::uint64_t seed) {
  const CapacitanceModel model = CapacitanceModel::single(a, c, delta);
  CapacitanceSamples s;
  s.positions.assign(grid.begin(), grid.end());
  s.values.reserve(grid.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double xi : grid) {
    double v = eval_1d(model, xi);
    if (noise_rel > 0.0) v *= 1.0 + noise_rel * noise(rng);
    s.values.push_back(v);
  }
  s.synthetic = true;
  s.gen_a = a;
  s.gen_c = c;
  s.gen_delta = delta;
  s.gen_noise_rel = noise_rel;
  s.gen_seed = seed;
  s.validate();
  return s;
}

namespace {

// Parameter vector: a_1..a_m, log c_1..log c_m.
template <class S>
S model_value(std::span<const S> p, int m, double delta, double xi) {
  S sum = 0.0;
  for (int i = 0; i < m; ++i) {
    const S inv_c = math::exp(-p[m + i]);
    sum = sum + p[i] * (math::erf((xi + delta) * inv_c) - math::erf((xi - delta) * inv_c));
  }
  return sum;
}

CapacitanceModel to_model(const std::vector<double>& p, int m, double delta) {
  std::vector<CapacitanceTerm> terms;
  for (int i = 0; i < m; ++i) terms.push_back({p[i], std::exp(p[m + i])});
  return CapacitanceModel(std::move(terms), delta);
}

double ssr_of(const std::vector<double>& p, int m, double delta, const CapacitanceSamples& s) {
  double ssr = 0.0;
  for (std::size_t k = 0; k < s.positions.size(); ++k) {
    const double r = model_value<double>(p, m, delta, s.positions[k]) - s.values[k];
    ssr += r * r;
  }
  return ssr;
}

// Dense solve with partial pivoting; returns false when singular.
bool solve_dense(std::vector<double> a, std::vector<double>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
    }
    if (std::fabs(a[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (int k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
      std::swap(b[col], b[piv]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (int k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int k = r + 1; k < n; ++k) acc -= a[r * n + k] * b[k];
    b[r] = acc / a[r * n + r];
  }
  return true;
}

}  // namespace

FitResult fit(const CapacitanceSamples& samples, int terms, double delta, const FitOptions& options) {
  if (terms < 1) throw std::invalid_argument("fit: term count must be >= 1");
  if (!(delta > 0.0)) throw std::invalid_argument("fit: delta must be positive");
  samples.validate();
  const std::size_t ns = samples.positions.size();
  if (ns < static_cast<std::size_t>(2 * terms + 1)) {
    throw std::invalid_argument("fit: need at least 2m+1 samples");
  }

  const int m = terms;
  const int np = 2 * m;
  const double vmax = *std::max_element(samples.values.begin(), samples.values.end());
  std::vector<double> p(np);
  for (int i = 0; i < m; ++i) {
    p[i] = std::max(vmax, 0.0) / (2.0 * m);
    p[m + i] = std::log(delta * std::pow(2.0, i));
  }

  double sum_y2 = 0.0;
  for (double y : samples.values) sum_y2 += y * y;
  const double ssr_floor = 1e-28 * std::max(1.0, sum_y2);

  double ssr = ssr_of(p, m, delta, samples);
  double damping = 1e-3;
  std::vector<double> jac(ns * np);
  std::vector<double> resid(ns);
  std::vector<double> dir(np, 0.0);

  auto rms_of = [&](double s) { return std::sqrt(s / static_cast<double>(ns)); };

  for (int it = 0; it < options.max_iterations; ++it) {
    if (ssr <= ssr_floor) return {to_model(p, m, delta), rms_of(ssr), it};

    // Jacobian rows via one forward-mode pass per parameter direction.
    for (std::size_t k = 0; k < ns; ++k) {
      const double xi = samples.positions[k];
      resid[k] = model_value<double>(p, m, delta, xi) - samples.values[k];
      for (int j = 0; j < np; ++j) {
        std::fill(dir.begin(), dir.end(), 0.0);
        dir[j] = 1.0;
        jac[k * np + j] = diff::jvp<double>(
            [&](auto in) { return model_value(in, m, delta, xi); }, std::span<const double>(p),
            std::span<const double>(dir));
      }
    }
    std::vector<double> jtj(np * np, 0.0);
    std::vector<double> jtr(np, 0.0);
    for (std::size_t k = 0; k < ns; ++k) {
      for (int i = 0; i < np; ++i) {
        jtr[i] += jac[k * np + i] * resid[k];
        for (int j = 0; j < np; ++j) jtj[i * np + j] += jac[k * np + i] * jac[k * np + j];
      }
    }
    double gnorm = 0.0;
    for (double g : jtr) gnorm = std::max(gnorm, std::fabs(g));

    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      std::vector<double> lhs = jtj;
      for (int i = 0; i < np; ++i) lhs[i * np + i] += damping * std::max(jtj[i * np + i], 1e-12);
      std::vector<double> step(np);
      for (int i = 0; i < np; ++i) step[i] = -jtr[i];
      if (!solve_dense(lhs, step, np)) {
        damping *= 4.0;
        continue;
      }
      std::vector<double> trial = p;
      for (int i = 0; i < np; ++i) trial[i] += step[i];
      const double trial_ssr = ssr_of(trial, m, delta, samples);
      if (std::isfinite(trial_ssr) && trial_ssr < ssr) {
        const double decrease = ssr - trial_ssr;
        p = trial;
        ssr = trial_ssr;
        damping = std::max(damping / 3.0, 1e-12);
        accepted = true;
        if (decrease <= options.tolerance * (ssr + decrease)) return {to_model(p, m, delta), rms_of(ssr), it + 1};
      } else {
        damping *= 4.0;
      }
    }
    if (!accepted) {
      // No descent direction left: stationary to working precision.
      if (gnorm <= 1e-8 * std::max(1.0, std::sqrt(sum_y2))) return {to_model(p, m, delta), rms_of(ssr), it + 1};
      throw FitError("fit: no descent step found (stagnated)", to_model(p, m, delta), rms_of(ssr));
    }
  }
  throw FitError("fit: did not converge within " + std::to_string(options.max_iterations) + " iterations",
                 to_model(p, m, delta), rms_of(ssr));
}

// --- IO ----------------------------------------------------------------------

namespace {

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\r' || *end == '\t')) ++end;
  return end != begin && *end == '\0' && std::isfinite(out);
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

}  // namespace

CapacitanceSamples read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path.string(), 0);
  CapacitanceSamples s;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw CsvError("empty file: missing header `xi,capacitance`", 1);
  ++lineno;
  if (trim(line) != "xi,capacitance") throw CsvError("expected header `xi,capacitance`", lineno);
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw CsvError("expected two comma-separated fields", lineno);
    }
    double xi = 0.0;
    double val = 0.0;
    if (!parse_double(trim(line.substr(0, comma)), xi) || !parse_double(trim(line.substr(comma + 1)), val)) {
      throw CsvError("malformed number", lineno);
    }
    if (!s.positions.empty() && !(xi > s.positions.back())) {
      throw CsvError("positions must be strictly increasing", lineno);
    }
    s.positions.push_back(xi);
    s.values.push_back(val);
  }
  if (s.positions.empty()) throw CsvError("no samples", lineno);
  return s;
}

void write_samples_csv(const std::filesystem::path& path, const CapacitanceSamples& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "xi,capacitance\n";
  for (std::size_t i = 0; i < samples.positions.size(); ++i) {
    out << samples.positions[i] << ',' << samples.values[i] << '\n';
  }
}

std::string model_to_json(const CapacitanceModel& model) {
  nlohmann::json j;
  j["terms"] = nlohmann::json::array();
  for (const auto& t : model.terms()) j["terms"].push_back({{"a", t.a}, {"c", t.c}});
  j["delta"] = model.delta();
  return j.dump(2);
}

CapacitanceModel model_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  std::vector<CapacitanceTerm> terms;
  for (const auto& t : j.at("terms")) terms.push_back({t.at("a").get<double>(), t.at("c").get<double>()});
  return CapacitanceModel(std::move(terms), j.at("delta").get<double>());
}

}  // namespace depshaper
