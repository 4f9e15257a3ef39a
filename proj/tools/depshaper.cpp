// depshaper: capacitance fitting, density-shaping solves and rollouts.
//
// Exit codes: 0 ok, 1 internal failure, 2 input error, 3 fit failure,
// 4 solve finished with the dynamics constraint unsatisfied.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "depshaper/parallel.hpp"
#include "depshaper/scenario.hpp"

namespace fs = std::filesystem;
using namespace depshaper;

namespace {

enum Exit { kOk = 0, kInternal = 1, kInput = 2, kFitFailed = 3, kResidualWarning = 4 };

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void write_manifest(const fs::path& dir, const Scenario& s, const std::string& command) {
  nlohmann::ordered_json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["scenario"] = s.name;
  m["scenario_hash"] = scenario_hash(s);
  m["seed"] = s.seed;
  m["mode"] = mode_name(s.mode);
  m["deterministic"] = s.deterministic;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

void write_trajectories(const fs::path& path, const std::vector<double>& times,
                        const std::vector<std::vector<Vec2d>>& pos) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "t,particle_id,x1,x2\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (std::size_t l = 0; l < pos[k].size(); ++l) {
      out << times[k] << ',' << l << ',' << pos[k][l].x1 << ',' << pos[k][l].x2 << '\n';
    }
  }
}

void write_grid(const fs::path& dir, const std::string& stem, const DensityGrid& g) {
  write_grid_csv(dir / (stem + ".csv"), g);
  write_grid_pgm(dir / (stem + ".pgm"), g);
}

std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%.4f", t);
  return buf;
}

// Potential field on the loss grid at time t.
DensityGrid potential_grid(const ControlProblem& p, const PotentialSchedule& schedule, double t) {
  DensityGrid g = p.target;
  const PotentialSource src = schedule(t);
  for (std::size_t c = 0; c < g.size(); ++c) {
    const Vec2d y = g.center(c);
    if (const auto* d = std::get_if<DiscretePotentials>(&src)) {
      g.values[c] = particle_potential_discrete(y, p.array, *d, p.cap);
    } else {
      g.values[c] = std::get<ContinuousMap>(src).map->value(y.x1, y.x2, t);
    }
  }
  return g;
}

struct Gap {
  double median_bw = 0.0;  // median endpoint gap in bandwidth units
  double max_bw = 0.0;
  std::size_t left_safety = 0;
};

Gap endpoint_gap(const ControlProblem& p, const RolloutResult& r, const std::vector<Vec2d>& predicted) {
  const double h = std::max(p.bandwidth.h1, p.bandwidth.h2);
  std::vector<double> d;
  const auto& fin = r.positions.back();
  for (std::size_t l = 0; l < fin.size(); ++l) {
    d.push_back(std::hypot(fin[l].x1 - predicted[l].x1, fin[l].x2 - predicted[l].x2) / h);
  }
  Gap g;
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  g.median_bw = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  g.max_bw = d.back();
  g.left_safety = static_cast<std::size_t>(std::count(r.left_safety_box.begin(), r.left_safety_box.end(), true));
  return g;
}

void write_rollout_summary(const fs::path& path, const Gap& g, const ControlProblem& p) {
  nlohmann::ordered_json j;
  j["median_endpoint_gap_bandwidths"] = g.median_bw;
  j["max_endpoint_gap_bandwidths"] = g.max_bw;
  j["bandwidth_mm"] = std::max(p.bandwidth.h1, p.bandwidth.h2);
  j["particles_left_safety_box"] = g.left_safety;
  write_file(path, j.dump(2) + "\n");
}

int cmd_synth(double a, double c, double delta, double lo, double hi, int count, double noise, std::uint64_t seed,
              const fs::path& out) {
  if (count < 2 || !(hi > lo)) throw InputError("synth: need --count >= 2 and --xi-max > --xi-min");
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i) grid[i] = lo + (hi - lo) * i / (count - 1);
  const auto s = synth_samples(a, c, delta, grid, noise, seed);
  write_samples_csv(out, s);
  std::cout << "wrote " << count << " samples to " << out.string() << "\n";
  return kOk;
}

int cmd_fit(const fs::path& samples, int terms, double delta, const fs::path& out) {
  if (terms < 1) throw InputError("fit: --terms must be >= 1");
  if (!(delta > 0.0)) throw InputError("fit: --delta must be positive");
  CapacitanceSamples s;
  try {
    s = read_samples_csv(samples);
  } catch (const CsvError& e) {
    throw InputError(samples.string() + ":" + std::to_string(e.line()) + ": " + e.what());
  }
  const FitResult r = fit(s, terms, delta);
  write_file(out, model_to_json(r.model) + "\n");
  std::cout.precision(10);
  std::cout << "rms " << r.rms << " after " << r.iterations << " iterations\n";
  for (const auto& t : r.model.terms()) std::cout << "  a = " << t.a << "  c = " << t.c << "\n";
  return kOk;
}

int cmd_solve(const Scenario& s, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& p = s.problem;
  SolveReport report;
  std::vector<std::vector<Vec2d>> traj;
  PotentialSchedule schedule;
  std::vector<Vec2d> predicted;
  std::optional<ContinuousNets> nets;

  if (s.mode == SolverMode::ContinuousMap) {
    nets = make_continuous_nets(p, s.trajectory_hidden, s.potential_hidden, s.seed, s.trajectory_init_scale,
                                s.potential_init_scale);
    report = solve_continuous(p, *nets, s.train);
    ContinuousObjective obj(p, nets->trajectories, *nets->potential);
    traj = obj.positions(obj.pack(nets->trajectories, *nets->potential));
    schedule = continuous_schedule(nets->potential);
    write_file(dir / "checkpoint.json",
               checkpoint_to_json({{"trajectory_x1", nets->trajectories.axis(0)},
                                   {"trajectory_x2", nets->trajectories.axis(1)},
                                   {"potential", nets->potential->net()}}));
  } else {
    auto sol = solve_collocation(p, s.train, s.seed, s.potential_init_scale);
    report = sol.report;
    traj = sol.positions;
    std::ofstream pot(dir / "potentials.csv");
    pot.precision(17);
    pot << "t,electrode_id,V";
    pot << '\n';
    for (std::size_t k = 0; k < p.times.size(); ++k) {
      for (std::size_t e = 0; e < p.array.size(); ++e) pot << p.times[k] << ',' << e << ',' << sol.potentials[k].values[e] << '\n';
    }
    schedule = discrete_schedule(p.times, sol.potentials);
  }
  predicted = traj.back();

  write_file(dir / "report.json", report_to_json(report, !s.deterministic));
  {
    nlohmann::ordered_json t;
    t["wall_time_s"] = report.wall_time_s;
    t["threads"] = max_threads();
    write_file(dir / "timing.json", t.dump(2) + "\n");
  }
  write_trajectories(dir / "trajectories.csv", p.times, traj);
  write_grid(dir, "target", p.target);
  write_grid(dir, "kde_final", report.final_kde);
  write_grid(dir, "kde_initial", kde_evaluate(p.x0, p.bandwidth, p.target));
  for (double t : s.snapshot_times) write_grid(dir, "potential_" + time_tag(t), potential_grid(p, schedule, t));

  const auto r = rollout(p, schedule, p.x0, s.rollout_substeps);
  const Gap gap = endpoint_gap(p, r, predicted);
  write_trajectories(dir / "rollout.csv", r.times, r.positions);
  write_rollout_summary(dir / "rollout_summary.json", gap, p);
  write_manifest(dir, s, "solve");

  std::cout.precision(6);
  std::cout << "mode " << report.mode << "  iterations " << report.iterations << "\n"
            << "mse " << report.initial_mse << " -> " << report.final_mse << "  (reduction " << report.mse_reduction
            << ")\n"
            << "mean residual " << report.mean_residual << "  tol " << report.residual_tol << "  lambda "
            << report.final_lambda << "\n"
            << "rollout median gap " << gap.median_bw << " bandwidths\n"
            << "status " << report.status << "  wall " << report.wall_time_s << " s\n";
  return report.status == "ok" ? kOk : kResidualWarning;
}

int cmd_rollout(const Scenario& s, const fs::path& checkpoint, const fs::path& dir) {
  if (s.mode != SolverMode::ContinuousMap) throw InputError("rollout: checkpoints exist only for continuous mode");
  const auto& p = s.problem;
  std::vector<NamedNet> nets;
  try {
    nets = checkpoint_from_json(read_file(checkpoint));
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(checkpoint.string() + ": " + e.what());
  }
  auto find = [&](const std::string& name) -> const Mlp& {
    for (const auto& n : nets) {
      if (n.name == name) return n.net;
    }
    throw InputError("checkpoint has no network named '" + name + "'");
  };
  const Mlp& a1 = find("trajectory_x1");
  const Mlp& a2 = find("trajectory_x2");
  const Mlp& v = find("potential");
  const int n = static_cast<int>(p.particle_count());
  if (a1.in_dim() != 1 || a1.out_dim() != n || a2.in_dim() != 1 || a2.out_dim() != n || v.in_dim() != 3 ||
      v.out_dim() != 1 || a1.hidden_dim() != a2.hidden_dim()) {
    throw InputError("checkpoint shapes do not match the scenario (" + std::to_string(n) + " particles)");
  }
  auto map = std::make_shared<PotentialMap>(v, p.domain.x1_min, p.domain.x1_max, p.domain.x2_min, p.domain.x2_max,
                                            p.horizon, p.array.v_max);
  const TrajectoryBundle bundle(a1, a2, p.x0, p.horizon);
  fs::create_directories(dir);
  const auto r = rollout(p, continuous_schedule(map), p.x0, s.rollout_substeps);
  const Gap gap = endpoint_gap(p, r, bundle.positions(p.horizon));
  write_trajectories(dir / "rollout.csv", r.times, r.positions);
  write_rollout_summary(dir / "rollout_summary.json", gap, p);
  write_manifest(dir, s, "rollout");
  std::cout << "median endpoint gap " << gap.median_bw << " bandwidths, max " << gap.max_bw << ", left safety box "
            << gap.left_safety << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density shaping of particle ensembles under electrode actuation"};
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "OpenMP threads (default: DEPSHAPER_THREADS or runtime default)");
  app.fallthrough();

  fs::path scenario_path, out_dir = "out", checkpoint_path, samples_path, model_out = "model.json";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  auto scenario_opts = [&](CLI::App* sub) {
    sub->add_option("--scenario", scenario_path, "scenario JSON")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the scenario seed");
    sub->add_flag("--deterministic", deterministic, "force deterministic mode (report without timing)");
  };

  auto* solve = app.add_subcommand("solve", "solve a scenario and write report, trajectories and grids");
  scenario_opts(solve);
  auto* roll = app.add_subcommand("rollout", "integrate particles under a checkpointed potential map");
  scenario_opts(roll);
  roll->add_option("--checkpoint", checkpoint_path, "checkpoint JSON from solve")->required();

  int terms = 1;
  double delta = 0.125;
  auto* fitc = app.add_subcommand("fit", "fit the capacitance model to samples");
  fitc->add_option("--samples", samples_path, "CSV with header xi,capacitance")->required();
  fitc->add_option("--terms", terms, "number of error-function terms m");
  fitc->add_option("--delta", delta, "half electrode pitch (mm)");
  fitc->add_option("--out", model_out, "model JSON output");

  double sa = 1.0, sc = 0.2, sdelta = 0.125, lo = -1.0, hi = 1.0, noise = 0.0;
  int count = 101;
  std::uint64_t synth_seed = 20240501;
  fs::path synth_out = "samples.csv";
  auto* synth = app.add_subcommand("synth", "generate capacitance samples from a known model");
  synth->add_option("--a", sa, "scale a");
  synth->add_option("--c", sc, "length scale c (mm)");
  synth->add_option("--delta", sdelta, "half electrode pitch (mm)");
  synth->add_option("--xi-min", lo, "first offset (mm)");
  synth->add_option("--xi-max", hi, "last offset (mm)");
  synth->add_option("--count", count, "sample count");
  synth->add_option("--noise", noise, "relative Gaussian noise level");
  synth->add_option("--seed", synth_seed, "noise seed");
  synth->add_option("--out", synth_out, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    configure_threads(threads);
    if (*synth) return cmd_synth(sa, sc, sdelta, lo, hi, count, noise, synth_seed, synth_out);
    if (*fitc) return cmd_fit(samples_path, terms, delta, model_out);
    Scenario s = load_scenario(scenario_path, seed);
    if (deterministic) s.deterministic = true;
    if (*solve) return cmd_solve(s, out_dir);
    return cmd_rollout(s, checkpoint_path, out_dir);
  } catch (const ScenarioError& e) {
    std::cerr << "scenario error at " << e.what() << "\n";
    return kInput;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const CsvError& e) {
    std::cerr << "input error: line " << e.line() << ": " << e.what() << "\n";
    return kInput;
  } catch (const FitError& e) {
    std::cerr << "fit failed: " << e.what() << " (rms " << e.rms() << ")\n";
    return kFitFailed;
  } catch (const SolveError& e) {
    std::cerr << "solve aborted: " << e.what() << "\n";
    return kInternal;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
