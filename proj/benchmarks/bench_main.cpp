#include "ergosim/density.hpp"
#include "ergosim/euler.hpp"
#include "ergosim/functional.hpp"
#include "ergosim/poisson1d.hpp"
#include "ergosim/rng.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace ergosim;

namespace {

SdeModel ou() { return builtin_model(ModelFamily::OU, {{"kappa", 1}, {"mu", 0}, {"sigma", std::sqrt(2.0)}}); }

void BM_PhiloxNormal(benchmark::State& state) {
  RngStream rng(7, 1);
  for (auto _ : state) benchmark::DoNotOptimize(rng.normal());
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PhiloxNormal);

// One path per iteration; items = Euler steps.
void BM_EulerPath(benchmark::State& state) {
  const auto m = ou();
  const auto f = polynomial_functional({{0, 1}});
  const double eps = 1.0 / static_cast<double>(state.range(0));
  const auto sch = StepSchedule::make(Regime::LLN, {1.5, 1.0, 0.35}, eps, m.holder_nu);
  std::uint64_t id = 0;
  std::int64_t steps = 0;
  for (auto _ : state) {
    RngStream rng(11, ++id);
    const auto acc = simulate_euler(m, sch, f, 1.0, rng);
    steps += acc.steps;
    benchmark::DoNotOptimize(acc.xi_continuous);
  }
  state.SetItemsProcessed(steps);
}
BENCHMARK(BM_EulerPath)->Arg(25)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_InvariantDensity(benchmark::State& state) {
  const auto m = builtin_model(ModelFamily::CIR, {{"kappa", 1}, {"mu", 1}, {"sigma", 1}});
  for (auto _ : state) benchmark::DoNotOptimize(invariant_density_1d(m).normalizer());
}
BENCHMARK(BM_InvariantDensity)->Unit(benchmark::kMillisecond);

void BM_Poisson1D(benchmark::State& state) {
  const auto m = ou();
  const auto pi = invariant_density_1d(m);
  const auto f = centralize(polynomial_functional(hermite_polynomial(3)), pi);
  const auto grid = uniform_grid(-8, 8, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_poisson_1d(m, pi, f, 0.0, grid).grid.size());
}
BENCHMARK(BM_Poisson1D)->Arg(161)->Arg(641)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
