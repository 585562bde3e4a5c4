#include "ergosim/density.hpp"
#include "ergosim/error.hpp"
#include "ergosim/functional.hpp"
#include "ergosim/poisson1d.hpp"
#include "ergosim/rng.hpp"
#include "ergosim/variance.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <sstream>

using namespace ergosim;

namespace {

struct Setup {
  SdeModel model;
  InvariantDensity1D pi;
  FunctionalSpec f;
  PoissonSolution sol;
  CovarianceCurve curve;
};

Setup make_setup(const SdeModel& model, const Polynomial& poly, const std::vector<double>& grid) {
  auto pi = invariant_density_1d(model);
  auto f = centralize(polynomial_functional(poly), pi);
  auto sol = solve_poisson_1d(model, pi, f, 0.0, grid);
  auto curve = mf_gradient_form({sol}, model, pi, {0.0});
  return {model, pi, f, sol, curve};
}

const Setup& ou() {
  static const Setup s = make_setup(
      builtin_model(ModelFamily::OU, {{"kappa", 1}, {"mu", 0}, {"sigma", std::sqrt(2.0)}}), {{0, 1}},
      uniform_grid(-8, 8, 641));
  return s;
}

const Setup& cir() {
  static const Setup s = make_setup(builtin_model(ModelFamily::CIR, {{"kappa", 1}, {"mu", 1}, {"sigma", 1}}),
                                    {{0, 1}}, uniform_grid(0.005, 20, 800));
  return s;
}

CovarianceCurve constant_curve(double m) {
  CovarianceCurve c;
  c.times = {0.0};
  c.matrices = {Matrix::Constant(1, 1, m)};
  return c;
}

}  // namespace

TEST(GradientForm, Ou) { EXPECT_NEAR(ou().curve.matrices[0](0, 0), 2.0, 1e-6); }

TEST(GradientForm, Cir) { EXPECT_NEAR(cir().curve.matrices[0](0, 0), 1.0, 1e-4); }

TEST(GradientForm, ZeroFunctional) {
  const auto sol = solve_poisson_1d(ou().model, ou().pi, zero_functional(), 0.0, uniform_grid(-8, 8, 321));
  EXPECT_EQ(mf_gradient_form({sol}, ou().model, ou().pi, {0.0}).matrices[0](0, 0), 0.0);
}

TEST(GradientForm, HermiteCorpus) {
  // u' = He_n' / n = He_{n-1}, M = 2 E[He_{n-1}^2] = 2 (n-1)!
  const double expected[] = {2.0, 2.0, 4.0, 12.0};
  for (int n = 1; n <= 4; ++n) {
    const auto s = make_setup(ou().model, hermite_polynomial(n), uniform_grid(-10, 10, 801));
    EXPECT_NEAR(s.curve.matrices[0](0, 0), expected[n - 1], 1e-6 * expected[n - 1]) << n;
  }
}

TEST(GradientForm, TooNarrowGridRejected) {
  const auto sol = solve_poisson_1d(ou().model, ou().pi, ou().f, 0.0, uniform_grid(-1, 1, 81));
  EXPECT_THROW(mf_gradient_form({sol}, ou().model, ou().pi, {0.0}), Error);
}

TEST(GradientForm, TimeModulatedSlices) {
  const auto f = centralize(polynomial_functional({{0, 1}}, TimeModulation{0.5, 3.0}), ou().pi);
  const std::vector<double> times{0.0, 0.25, 0.5, 1.0};
  std::vector<PoissonSolution> sols;
  for (double t : times) sols.push_back(solve_poisson_1d(ou().model, ou().pi, f, t, uniform_grid(-8, 8, 641)));
  const auto curve = mf_gradient_form(sols, ou().model, ou().pi, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double m = 1.0 + 0.5 * std::sin(3.0 * times[k]);
    EXPECT_NEAR(curve.matrices[k](0, 0), 2.0 * m * m, 1e-6);
  }
  // Linear in between, constant outside.
  EXPECT_NEAR(curve.at(0.125)(0, 0), 0.5 * (curve.matrices[0](0, 0) + curve.matrices[1](0, 0)), 1e-14);
  EXPECT_EQ(curve.at(2.0)(0, 0), curve.matrices[3](0, 0));
}

TEST(AutocorrelationForm, OuLinear) {
  AutocorrelationOptions o;  // S = 10, 1e5 paths
  const auto c = mf_autocorrelation_form(ou().model, &ou().pi, ou().f, 0.0, 12345, o);
  const double m = c.matrices[0](0, 0);
  const double se = c.standard_errors[0](0, 0);
  EXPECT_LT(std::abs(m - 2.0), 3.0 * se);
  EXPECT_LT(std::abs(m - 2.0), 0.05 * 2.0);
  EXPECT_EQ(c.route, CovarianceRoute::AUTOCORRELATION_FORM);
}

TEST(AutocorrelationForm, ZeroFunctionalIsExactlyZero) {
  AutocorrelationOptions o;
  o.n_paths = 1000;
  const auto c = mf_autocorrelation_form(ou().model, &ou().pi, zero_functional(), 0.0, 1, o);
  EXPECT_EQ(c.matrices[0](0, 0), 0.0);
  EXPECT_EQ(c.standard_errors[0](0, 0), 0.0);
}

TEST(AutocorrelationForm, AgreesWithGradientFormOnQuadratic) {
  const auto s = make_setup(ou().model, {{0, 0, 1}}, uniform_grid(-10, 10, 801));
  AutocorrelationOptions o;
  o.n_paths = 50000;
  const auto c = mf_autocorrelation_form(s.model, &s.pi, s.f, 0.0, 777, o);
  const double g = s.curve.matrices[0](0, 0);
  EXPECT_LT(std::abs(c.matrices[0](0, 0) - g), std::max(0.05 * g, 3.0 * c.standard_errors[0](0, 0)));
}

TEST(AutocorrelationForm, CirCrossOracle) {
  AutocorrelationOptions o;
  const auto c = mf_autocorrelation_form(cir().model, &cir().pi, cir().f, 0.0, 4242, o);
  const double g = cir().curve.matrices[0](0, 0);
  EXPECT_LT(std::abs(c.matrices[0](0, 0) - g), std::max(0.05 * g, 3.0 * c.standard_errors[0](0, 0)));
}

TEST(AutocorrelationForm, ShortHorizonRejected) {
  AutocorrelationOptions o;
  o.horizon_s = 0.5;
  o.n_paths = 2000;
  EXPECT_THROW(mf_autocorrelation_form(ou().model, &ou().pi, ou().f, 0.0, 1, o), Error);
}

TEST(AutocorrelationForm, DeterministicAcrossThreads) {
  AutocorrelationOptions o;
  o.n_paths = 20000;
  o.threads = 1;
  const auto a = mf_autocorrelation_form(ou().model, &ou().pi, ou().f, 0.0, 5, o);
  o.threads = 3;
  const auto b = mf_autocorrelation_form(ou().model, &ou().pi, ou().f, 0.0, 5, o);
  EXPECT_EQ(a.matrices[0](0, 0), b.matrices[0](0, 0));
  EXPECT_EQ(a.standard_errors[0](0, 0), b.standard_errors[0](0, 0));
}

TEST(Scaling, GradientFormScalesQuadratically) {
  const double c = -3.0;
  const auto fs = scaled(ou().f, c);
  const auto sol = solve_poisson_1d(ou().model, ou().pi, fs, 0.0, uniform_grid(-8, 8, 641));
  const auto curve = mf_gradient_form({sol}, ou().model, ou().pi, {0.0});
  const double m = ou().curve.matrices[0](0, 0);
  EXPECT_NEAR(curve.matrices[0](0, 0), c * c * m, 1e-12 * c * c * m);
  const auto path = RatePath::make({0.0, 0.4, 1.0}, {Vector::Zero(1), Vector::Constant(1, 0.7), Vector::Constant(1, -0.2)});
  EXPECT_NEAR(rate_function(path, curve), rate_function(path, ou().curve) / (c * c), 1e-13);
}

TEST(Scaling, AutocorrelationFormScalesQuadratically) {
  AutocorrelationOptions o;
  o.n_paths = 3200;
  const auto a = mf_autocorrelation_form(ou().model, &ou().pi, ou().f, 0.0, 9, o);
  const auto b = mf_autocorrelation_form(ou().model, &ou().pi, scaled(ou().f, 2.5), 0.0, 9, o);
  EXPECT_NEAR(b.matrices[0](0, 0), 6.25 * a.matrices[0](0, 0), 1e-10 * std::abs(b.matrices[0](0, 0)));
}

TEST(RateFunction, LinearPathClosedForm) {
  EXPECT_NEAR(rate_function(RatePath::linear(Vector::Constant(1, 2.0), 1.0), constant_curve(2.0)), 1.0, 1e-15);
  EXPECT_NEAR(rate_function(RatePath::linear(Vector::Constant(1, 1.0), 1.0), ou().curve), 0.25, 1e-12);
}

TEST(RateFunction, ZeroPath) {
  EXPECT_EQ(rate_function(RatePath::linear(Vector::Zero(1), 1.0), constant_curve(2.0)), 0.0);
}

TEST(RateFunction, PositiveDefinite) {
  RngStream rng(3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> t{0.0};
    std::vector<Vector> v{Vector::Zero(1)};
    const bool flat = trial % 5 == 0;
    for (int k = 1; k <= 5; ++k) {
      t.push_back(t.back() + 0.1 + rng.uniform());
      v.push_back(flat ? Vector::Zero(1) : Vector::Constant(1, 3.0 * rng.normal()));
    }
    const double i = rate_function(RatePath::make(t, v), constant_curve(1.0 + rng.uniform()));
    if (flat)
      EXPECT_EQ(i, 0.0);
    else
      EXPECT_GT(i, 0.0);
  }
}

TEST(RateFunction, PiecewiseLinearCovariance) {
  // M(t) = 1 + t on [0, 1], xi(t) = t: I = 1/2 int 1/(1+t) dt = ln(2) / 2.
  CovarianceCurve c;
  c.times = {0.0, 1.0};
  c.matrices = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0)};
  EXPECT_NEAR(rate_function(RatePath::linear(Vector::Constant(1, 1.0), 1.0), c), 0.5 * std::log(2.0), 1e-14);
}

TEST(RateFunction, TwoDimensional) {
  CovarianceCurve c;
  c.times = {0.0};
  Matrix m(2, 2);
  m << 2.0, 0.5, 0.5, 1.0;
  c.matrices = {m};
  const Vector v = (Vector(2) << 1.0, -1.0).finished();
  const double expected = 0.5 * v.dot(m.inverse() * v);
  EXPECT_NEAR(rate_function(RatePath::linear(v, 1.0), c), expected, 1e-14);
}

TEST(RateFunction, DegenerateCovarianceRejected) {
  try {
    rate_function(RatePath::linear(Vector::Constant(1, 1.0), 1.0), constant_curve(0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate covariance; rate undefined"), std::string::npos);
  }
}

TEST(RatePath, Validation) {
  EXPECT_THROW(RatePath::make({0.1, 1.0}, {Vector::Zero(1), Vector::Zero(1)}), Error);
  EXPECT_THROW(RatePath::make({0.0, 1.0}, {Vector::Ones(1), Vector::Zero(1)}), Error);
  EXPECT_THROW(RatePath::make({0.0, 0.0}, {Vector::Zero(1), Vector::Zero(1)}), Error);
  const auto p = RatePath::make({0.0, 1.0, 2.0}, {Vector::Zero(1), Vector::Ones(1), Vector::Zero(1)});
  EXPECT_EQ(p.slope_at(0.5)[0], 1.0);
  EXPECT_EQ(p.slope_at(1.0)[0], -1.0);  // right-continuous
  EXPECT_EQ(p.value_at(1.5)[0], 0.5);
}

TEST(OptimalControl, OuLinearIsConstant) {
  const auto phi = optimal_control(RatePath::linear(Vector::Constant(1, 1.0), 1.0), {ou().sol}, ou().curve, ou().model);
  for (double x : {-3.0, 0.0, 2.0})
    for (double s : {0.0, 0.5, 0.99}) EXPECT_NEAR(phi(x, s), 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(control_cost(phi, ou().pi), 0.5, 1e-6);
}

TEST(OptimalControl, ZeroPath) {
  const auto phi = optimal_control(RatePath::linear(Vector::Zero(1), 1.0), {ou().sol}, ou().curve, ou().model);
  EXPECT_EQ(phi(1.0, 0.5), 0.0);
  EXPECT_EQ(control_cost(phi, ou().pi), 0.0);
}

TEST(OptimalControl, CostIdentityOnCir) {
  const auto path = RatePath::linear(Vector::Constant(1, 1.0), 1.0);
  const auto phi = optimal_control(path, {cir().sol}, cir().curve, cir().model);
  const double i = rate_function(path, cir().curve);
  EXPECT_NEAR(control_cost(phi, cir().pi), 2.0 * i, 1e-3 * 2.0 * i);
}

TEST(OptimalControl, CostIdentityOnHermiteAndKinkedPath) {
  const auto s = make_setup(ou().model, hermite_polynomial(2), uniform_grid(-10, 10, 801));
  const auto path = RatePath::make({0.0, 0.3, 1.0}, {Vector::Zero(1), Vector::Constant(1, 0.6), Vector::Constant(1, -0.1)});
  const auto phi = optimal_control(path, {s.sol}, s.curve, s.model);
  const double i = rate_function(path, s.curve);
  EXPECT_NEAR(control_cost(phi, s.pi), 2.0 * i, 1e-3 * 2.0 * i);
}

TEST(CovarianceJson, Schema) {
  std::ostringstream out;
  write_covariance_json(out, ou().curve);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["route"], "GRADIENT_FORM");
  EXPECT_EQ(j["times"].size(), 1u);
  EXPECT_NEAR(j["matrices"][0][0][0].get<double>(), 2.0, 1e-6);
  EXPECT_TRUE(j.contains("stderr"));
}
