#include "ergosim/density.hpp"
#include "ergosim/error.hpp"
#include "ergosim/functional.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ergosim;

namespace {

const InvariantDensity1D& ou_pi() {
  static const auto pi = invariant_density_1d(
      builtin_model(ModelFamily::OU, {{"kappa", 1}, {"mu", 0}, {"sigma", std::sqrt(2.0)}}));
  return pi;
}

const InvariantDensity1D& cir_pi() {
  static const auto pi = invariant_density_1d(builtin_model(ModelFamily::CIR, {{"kappa", 1}, {"mu", 1}, {"sigma", 1}}));
  return pi;
}

}  // namespace

TEST(Centralize, OddFunctionUnderOuUnchanged) {
  const auto f = polynomial_functional({{0, 1}});
  const auto fc = centralize(f, ou_pi());
  EXPECT_TRUE(fc.centralized);
  for (double x : {-2.0, 0.0, 1.3}) EXPECT_NEAR(fc.eval1(0, x), x, 1e-9);
}

TEST(Centralize, CirMeanIsOne) {
  const auto fc = centralize(polynomial_functional({{0, 1}}), cir_pi());
  for (double x : {0.1, 1.0, 4.0}) EXPECT_NEAR(fc.eval1(0, x), x - 1.0, 1e-8);
}

TEST(Centralize, SquareUnderOu) {
  const auto fc = centralize(polynomial_functional({{0, 0, 1}}), ou_pi());
  for (double x : {-2.0, 0.0, 1.3}) EXPECT_NEAR(fc.eval1(0, x), x * x - 1.0, 1e-8);
}

TEST(Centralize, Idempotent) {
  const auto once = centralize(polynomial_functional({{0.3, -1, 0.5, 0.2}}), cir_pi());
  const auto twice = centralize(once, cir_pi());
  for (double x : {0.05, 0.5, 2.0, 7.0}) EXPECT_NEAR(once.eval1(0, x), twice.eval1(0, x), 1e-9);
}

TEST(Centralize, TimeModulatedIsSeparable) {
  const auto f = polynomial_functional({{1, 1}}, TimeModulation{0.5, 2.0});
  EXPECT_FALSE(f.time_homogeneous);
  const auto fc = centralize(f, cir_pi());
  for (double t : {0.0, 0.3, 1.0})
    for (double x : {0.2, 3.0}) EXPECT_NEAR(fc.eval1(t, x), (x + 1 - 2.0) * (1 + 0.5 * std::sin(2.0 * t)), 1e-8);
  for (double t : {0.0, 0.7}) EXPECT_NEAR(pi_mean(fc, cir_pi(), t)[0], 0.0, 1e-8);
}

TEST(PiMean, NonIntegrableFunctionRejected) {
  const auto f = scalar_functional("exp(x^2)", [](double x) { return std::exp(x * x); }, 0.0);
  EXPECT_THROW(pi_mean(f, ou_pi(), 0.0), Error);
}

TEST(Hermite, ProbabilistsPolynomials) {
  const auto h4 = hermite_polynomial(4);
  for (double x : {-1.5, 0.0, 2.0}) EXPECT_DOUBLE_EQ(h4(x), x * x * x * x - 6 * x * x + 3);
  const auto h3 = hermite_polynomial(3);
  EXPECT_DOUBLE_EQ(h3(2.0), 8.0 - 6.0);
}

TEST(Hermite, MeanZeroUnderStandardNormal) {
  for (int n = 1; n <= 4; ++n) {
    const auto f = polynomial_functional(hermite_polynomial(n));
    EXPECT_NEAR(pi_mean(f, ou_pi(), 0.0)[0], 0.0, 1e-8) << n;
  }
}

TEST(Scaled, MultipliesValues) {
  const auto f = scaled(polynomial_functional({{0, 1}}), -3.0);
  EXPECT_DOUBLE_EQ(f.eval1(0, 2.0), -6.0);
}

TEST(ZeroFunctional, IsZero) {
  const auto f = zero_functional();
  EXPECT_EQ(f.eval1(0.5, 3.0), 0.0);
  EXPECT_TRUE(f.centralized);
}

TEST(FunctionalGrowth, LinearPassesWithP0One) {
  const auto f = polynomial_functional({{0, 1}});
  std::vector<Vector> probes;
  for (int k = -20; k <= 20; ++k) probes.push_back(Vector::Constant(1, 0.25 * k));
  EXPECT_TRUE(check_functional_growth(f, probes, 1.0).passed);
  EXPECT_EQ(f.growth_p0, 1.0);
}
