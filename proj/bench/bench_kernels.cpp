// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "../tests/support/problems.hpp"
#include "depshaper/parallel.hpp"

using namespace depshaper;

namespace {

std::vector<Vec2d> points(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<Vec2d> p(n);
  for (auto& x : p) x = {u(rng), u(rng)};
  return p;
}

void BM_KdeParallel(benchmark::State& st) {
  const auto p = points(static_cast<std::size_t>(st.range(0)));
  const auto g = DensityGrid::make(-1, 1, -1, 1, 64, 64);
  for (auto _ : st) benchmark::DoNotOptimize(kde_evaluate(p, {0.1, 0.1}, g));
  st.counters["threads"] = max_threads();
}

void BM_KdeReference(benchmark::State& st) {
  const auto p = points(static_cast<std::size_t>(st.range(0)));
  const auto g = DensityGrid::make(-1, 1, -1, 1, 64, 64);
  for (auto _ : st) benchmark::DoNotOptimize(kde_evaluate_reference(p, {0.1, 0.1}, g));
}

struct ObjectiveFixture {
  ControlProblem problem;
  ContinuousNets nets;
  std::vector<double> params;
  std::unique_ptr<ContinuousObjective> obj;

  explicit ObjectiveFixture(int particles) {
    std::mt19937_64 rng(2);
    testing::SmallShape shape;
    shape.particles = particles;
    shape.time_samples = 20;
    shape.grid = 32;
    problem = testing::small_problem(rng, shape);
    nets = make_continuous_nets(problem, 16, 16, 3, 0.2, 0.2);
    obj = std::make_unique<ContinuousObjective>(problem, nets.trajectories, *nets.potential);
    params = obj->pack(nets.trajectories, *nets.potential);
  }
};

void BM_ObjectiveAnalytic(benchmark::State& st) {
  ObjectiveFixture f(static_cast<int>(st.range(0)));
  std::vector<double> g(f.params.size());
  for (auto _ : st) benchmark::DoNotOptimize(f.obj->evaluate(f.params, 1.0, g));
  st.counters["threads"] = max_threads();
}

void BM_ObjectiveTape(benchmark::State& st) {
  ObjectiveFixture f(static_cast<int>(st.range(0)));
  std::vector<double> g(f.params.size());
  for (auto _ : st) benchmark::DoNotOptimize(f.obj->evaluate_reference(f.params, 1.0, g));
}

void BM_RolloutParallel(benchmark::State& st) {
  const auto p = points(static_cast<std::size_t>(st.range(0)));
  const VelocityField v = [](const Vec2d& x, double t) { return Vec2d{-x.x2 * (1 + t), x.x1}; };
  for (auto _ : st) benchmark::DoNotOptimize(rollout(v, p, 1.0, 200));
  st.counters["threads"] = max_threads();
}

}  // namespace

BENCHMARK(BM_KdeParallel)->Arg(64)->Arg(450);
BENCHMARK(BM_KdeReference)->Arg(64)->Arg(450);
BENCHMARK(BM_ObjectiveAnalytic)->Arg(8)->Arg(32);
BENCHMARK(BM_ObjectiveTape)->Arg(8)->Arg(32);
BENCHMARK(BM_RolloutParallel)->Arg(450);

BENCHMARK_MAIN();
