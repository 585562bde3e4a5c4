#include "ergosim/error.hpp"
#include "ergosim/euler.hpp"
#include "ergosim/rng.hpp"
#include "ergosim/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

using namespace ergosim;

namespace {

SdeModel ou() { return builtin_model(ModelFamily::OU, {{"kappa", 1}, {"mu", 0}, {"sigma", std::sqrt(2.0)}}); }

SdeModel brownian() {
  SdeModel m = make_scalar_model("bm", [](double) { return 0.0; }, [](double) { return 1.0; });
  m.constant_diffusion = true;
  return m;
}

// Delta = c eps^theta chosen so that 1 / Delta is an integer.
StepSchedule exact_schedule(Regime regime, double eps, double theta) {
  return StepSchedule::make_unchecked(regime, {theta, 1.0, 0.35}, eps);
}

}  // namespace

TEST(GridFloor, Examples) {
  EXPECT_DOUBLE_EQ(grid_floor(0.35, 0.1), 0.3);
  EXPECT_DOUBLE_EQ(grid_floor(0.3, 0.1), 0.3);
  EXPECT_DOUBLE_EQ(grid_floor(1e-9, 0.1), 0.0);
  EXPECT_EQ(grid_steps(1.0, 0.1), 10);
  EXPECT_EQ(grid_steps(1.0, 0.3), 3);
}

TEST(Schedule, ViolationMessages) {
  EXPECT_EQ(schedule_violation(Regime::CLT, {1.5, 1.0, 0.35}, 1.0).value(),
            "CLT requires theta > 1 + 1/nu = 2.0, got 1.5");
  EXPECT_FALSE(schedule_violation(Regime::CLT, {2.5, 1.0, 0.35}, 1.0).has_value());
  EXPECT_TRUE(schedule_violation(Regime::LLN, {1.0, 1.0, 0.35}, 1.0).has_value());
  EXPECT_FALSE(schedule_violation(Regime::LLN, {1.2, 1.0, 0.35}, 1.0).has_value());
  EXPECT_TRUE(schedule_violation(Regime::MDP, {2.5, 1.0, 0.5}, 1.0).has_value());
  EXPECT_TRUE(schedule_violation(Regime::MDP, {2.5, 1.0, 0.0}, 1.0).has_value());
  // nu = 1/2 moves the CLT bound to 3.
  EXPECT_TRUE(schedule_violation(Regime::CLT, {2.5, 1.0, 0.35}, 0.5).has_value());
  EXPECT_THROW(StepSchedule::make(Regime::CLT, {1.5, 1.0, 0.35}, 0.01, 1.0), Error);
}

TEST(Schedule, DerivedScales) {
  const auto s = StepSchedule::make(Regime::MDP, {2.5, 2.0, 0.35}, 0.04, 1.0);
  EXPECT_DOUBLE_EQ(s.delta_step, 2.0 * std::pow(0.04, 2.5));
  EXPECT_DOUBLE_EQ(s.mdp_scale, std::pow(0.04, 0.35));
  EXPECT_NEAR(s.beta(), std::pow(0.04, 0.3), 1e-15);
  EXPECT_DOUBLE_EQ(s.step_ratio(), s.delta_step / 0.04);
}

TEST(SimulateEuler, ZeroFunctionalAccumulatesZero) {
  const auto sch = exact_schedule(Regime::LLN, 0.1, 2.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RngStream rng(seed, 0);
    const auto acc = simulate_euler(brownian(), sch, zero_functional(), 1.0, rng);
    EXPECT_EQ(acc.xi_continuous[0], 0.0);
    EXPECT_EQ(acc.xi_riemann[0], 0.0);
    EXPECT_EQ(acc.sup_norm_seen, 0.0);
  }
}

TEST(SimulateEuler, NoiselessSingleStep) {
  SdeModel m = make_scalar_model("decay", [](double x) { return -x; }, [](double) { return 0.0; });
  m.initial_state = Vector::Constant(1, 1.0);
  const auto sch = exact_schedule(Regime::LLN, 0.1, 2.0);  // Delta = 0.01, Delta / eps = 0.1
  RngStream rng(1, 1);
  const auto acc = simulate_euler(m, sch, zero_functional(), sch.delta_step, rng);
  EXPECT_EQ(acc.steps, 1);
  EXPECT_NEAR(acc.terminal_state[0], 0.9, 1e-15);
}

TEST(SimulateEuler, OuMeanIsZero) {
  // eps = 0.01, Delta = eps^3, T = 1, 2000 seeds.
  const auto sch = StepSchedule::make(Regime::LLN, {3.0, 1.0, 0.35}, 0.01, 1.0);
  const auto f = polynomial_functional({{0, 1}});
  std::vector<double> xi(2000);
  parallel_for(xi.size(), 0, [&](std::size_t i) {
    RngStream rng(99, derive_stream_id(stream_purpose::replicate, i));
    xi[i] = simulate_euler(ou(), sch, f, 1.0, rng).xi_continuous[0];
  });
  EXPECT_LT(std::abs(mean(xi)), 3.0 * standard_error(xi));
}

TEST(SimulateEuler, BitwiseDeterministic) {
  const auto sch = StepSchedule::make(Regime::CLT, {2.5, 1.0, 0.35}, 0.05, 1.0);
  const auto f = polynomial_functional({{0, 1, 0.5}});
  RngStream a(7, 3), b(7, 3);
  const auto x = simulate_euler(ou(), sch, f, 1.0, a);
  const auto y = simulate_euler(ou(), sch, f, 1.0, b);
  EXPECT_EQ(x.xi_continuous[0], y.xi_continuous[0]);
  EXPECT_EQ(x.xi_riemann[0], y.xi_riemann[0]);
  EXPECT_EQ(x.sup_norm_seen, y.sup_norm_seen);
  EXPECT_EQ(x.terminal_state[0], y.terminal_state[0]);
}

TEST(SimulateEuler, NoiseScaling) {
  const double eps = 0.1;
  const auto sch = exact_schedule(Regime::LLN, eps, 2.0);  // 100 steps on [0, 1]
  const std::size_t n = 10000;
  std::vector<double> terminal(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(5, i), copy(5, i);
    terminal[i] = simulate_euler(brownian(), sch, zero_functional(), 1.0, rng).terminal_state[0];
    double sum = 0.0;
    for (int k = 0; k < 100; ++k) sum += copy.normal();
    ASSERT_NEAR(terminal[i], std::sqrt(sch.step_ratio()) * sum, 1e-12);
  }
  EXPECT_NEAR(variance(terminal), 1.0 / eps, 0.05 / eps);
}

TEST(SimulateEuler, RiemannSumIsPureAccumulation) {
  const auto sch = StepSchedule::make(Regime::CLT, {2.5, 1.0, 0.35}, 0.1, 1.0);
  const auto f = polynomial_functional({{0.5, -1, 0.25}}, TimeModulation{0.3, 5.0});
  double recomputed = 0.0;
  double last_sup = 0.0;
  bool exact = true;
  bool monotone = true;
  SimulationOptions opts;
  opts.observer = [&](std::int64_t k, double t, const Vector& z, const FunctionalAccumulator& acc) {
    if (acc.xi_riemann[0] != recomputed) exact = false;
    if (acc.sup_norm_seen < last_sup) monotone = false;
    last_sup = acc.sup_norm_seen;
    recomputed += f.eval1(static_cast<double>(k) * sch.delta_step, z[0]) * sch.delta_step;
    (void)t;
  };
  RngStream rng(4, 4);
  simulate_euler(ou(), sch, f, 1.0, rng, opts);
  EXPECT_TRUE(exact);
  EXPECT_TRUE(monotone);
}

TEST(SimulateEuler, ExplodesLoudly) {
  auto m = builtin_model(ModelFamily::POWER_DRIFT, {{"alpha", 3}, {"x0", 10}});
  const auto sch = exact_schedule(Regime::LLN, 0.1, 1.05);
  RngStream rng(1, 1);
  EXPECT_THROW(simulate_euler(m, sch, zero_functional(), 1.0, rng), TrajectoryExploded);
}

TEST(SimulateEuler, ChartModelStaysPositive) {
  const auto g = builtin_model(ModelFamily::GOMPERTZ, {{"kappa", 1}, {"mu", 1}, {"sigma", 1}});
  const auto sch = StepSchedule::make(Regime::LLN, {1.5, 1.0, 0.35}, 0.05, 1.0);
  bool positive = true;
  SimulationOptions opts;
  opts.observer = [&](std::int64_t, double, const Vector& z, const FunctionalAccumulator&) {
    positive = positive && z[0] > 0.0;
  };
  RngStream rng(2, 2);
  simulate_euler(g, sch, polynomial_functional({{0, 1}}), 1.0, rng, opts);
  EXPECT_TRUE(positive);
}

TEST(SimulateEuler, SnapshotSinkColumns) {
  std::ostringstream out;
  SimulationOptions opts;
  opts.observer = csv_snapshot_sink(out, 1, 1, 10);
  const auto sch = exact_schedule(Regime::LLN, 0.1, 2.0);
  RngStream rng(1, 1);
  simulate_euler(ou(), sch, polynomial_functional({{0, 1}}), 1.0, rng, opts);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,z_1,xi_1");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 11);  // k = 0, 10, ..., 100
}

TEST(SimulateReference, StrongOrderSelfConsistency) {
  // fine_factor 10 and 100 share one Brownian path with a 1000x reference.
  const auto sch = StepSchedule::make(Regime::LLN, {1.5, 1.0, 0.35}, 0.1, 1.0);
  const auto f = polynomial_functional({{0, 1}});
  double e10 = 0.0, e100 = 0.0;
  const int paths = 200;
  for (int i = 0; i < paths; ++i) {
    RngStream r1(8, i), r2(8, i), r3(8, i);
    const double z10 = simulate_reference(ou(), sch, 10, f, 1.0, r1, 100).terminal_state[0];
    const double z100 = simulate_reference(ou(), sch, 100, f, 1.0, r2, 10).terminal_state[0];
    const double z1000 = simulate_reference(ou(), sch, 1000, f, 1.0, r3, 1).terminal_state[0];
    e10 += std::abs(z10 - z1000);
    e100 += std::abs(z100 - z1000);
  }
  const double rate = std::log(e10 / e100) / std::log(10.0);
  EXPECT_GE(rate, 0.4);
}

TEST(SimulateReference, DeterministicDecay) {
  SdeModel m = make_scalar_model("decay", [](double x) { return -x; }, [](double) { return 0.0; });
  m.initial_state = Vector::Constant(1, 1.0);
  const double eps = 0.1;
  const auto sch = exact_schedule(Regime::LLN, eps, 2.0);
  const double exact = std::exp(-1.0 / eps);
  double prev = 0.0;
  for (int ff : {10, 100}) {
    RngStream rng(1, 1);
    const double z = simulate_reference(m, sch, ff, zero_functional(), 1.0, rng).terminal_state[0];
    const double h = sch.step_ratio() / ff;
    const double err = std::abs(z - exact);
    EXPECT_LT(err, 1.0 * h) << ff;
    if (prev > 0.0) {
      EXPECT_NEAR(prev / err, 10.0, 1.5);
    }
    prev = err;
  }
}

TEST(SimulateReference, RejectsSmallFineFactor) {
  const auto sch = exact_schedule(Regime::LLN, 0.1, 2.0);
  RngStream rng(1, 1);
  EXPECT_THROW(simulate_reference(ou(), sch, 5, zero_functional(), 1.0, rng), Error);
  RngStream rng2(1, 1);
  const auto acc = simulate_reference(ou(), sch, 10, zero_functional(), 1.0, rng2);
  EXPECT_EQ(acc.xi_continuous[0], 0.0);
}

TEST(SimulateControlled, ZeroControlIsBitwiseUncontrolled) {
  const auto sch = StepSchedule::make(Regime::MDP, {2.5, 1.0, 0.35}, 0.05, 1.0);
  const auto f = polynomial_functional({{0, 1}});
  for (std::uint64_t seed : {1u, 2u}) {
    RngStream a(seed, 0), b(seed, 0);
    const auto x = simulate_euler(ou(), sch, f, 1.0, a);
    const auto y = simulate_controlled(ou(), sch, ControlFunction::zero(1, 1.0), f, 1.0, b);
    EXPECT_EQ(x.xi_continuous[0], y.xi_continuous[0]);
    EXPECT_EQ(x.xi_riemann[0], y.xi_riemann[0]);
    EXPECT_EQ(x.terminal_state[0], y.terminal_state[0]);
  }
}

TEST(SimulateControlled, OptimalConstantControlHitsTargetSlope) {
  // psi = sigma M_f^{-1} v with sigma = sqrt 2, M_f = 2, v = 1.
  const double v = 1.0;
  const Vector c = Vector::Constant(1, std::sqrt(2.0) * v / 2.0);
  const auto psi = ControlFunction::constant(c, 1.0, 1.0);
  const auto f = polynomial_functional({{0, 1}});
  for (double eps : {0.05, 0.01}) {
    const auto sch = StepSchedule::make(Regime::MDP, {2.5, 1.0, 0.35}, eps, 1.0);
    std::vector<double> y(400);
    parallel_for(y.size(), 0, [&](std::size_t i) {
      RngStream rng(11, derive_stream_id(stream_purpose::replicate, i));
      y[i] = simulate_controlled(ou(), sch, psi, f, 1.0, rng).xi_continuous[0] / sch.mdp_scale;
    });
    EXPECT_NEAR(mean(y), v * 1.0, 0.1 * v) << "eps = " << eps;
  }
}

TEST(ControlFunction, L2BoundEnforced) {
  EXPECT_THROW(ControlFunction::constant(Vector::Constant(1, 2.0), 3.0, 1.0), Error);
  EXPECT_NO_THROW(ControlFunction::constant(Vector::Constant(1, 2.0), 4.0 + 1e-9, 1.0));
  EXPECT_THROW(ControlFunction::make([](double t) { return Vector::Constant(1, 10.0 * t); }, 1, 30.0, 1.0),
               Error);
}

TEST(SimulateControlled, RequiresMdpRegime) {
  const auto sch = StepSchedule::make(Regime::CLT, {2.5, 1.0, 0.35}, 0.05, 1.0);
  RngStream rng(1, 1);
  EXPECT_THROW(simulate_controlled(ou(), sch, ControlFunction::zero(1, 1.0), zero_functional(), 1.0, rng), Error);
}
