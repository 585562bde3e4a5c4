#include "ergosim/error.hpp"
#include "ergosim/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace ergosim;

namespace {

SdeModel ou() { return builtin_model(ModelFamily::OU, {{"kappa", 1}, {"mu", 0}, {"sigma", std::sqrt(2.0)}}); }

std::vector<Vector> integer_grid() {
  std::vector<Vector> g;
  for (int k = -3; k <= 3; ++k) g.push_back(Vector::Constant(1, k));
  return g;
}

}  // namespace

TEST(BuiltinModel, OuExponents) {
  const SdeModel m = ou();
  EXPECT_EQ(m.recurrence_alpha, 1.0);
  EXPECT_EQ(m.holder_nu, 1.0);
  EXPECT_EQ(m.drift_growth_alpha_bar, 1.0);
  EXPECT_TRUE(m.constant_diffusion);
}

TEST(ValidateConditions, OuPassesOnIntegerGrid) {
  const auto probes = integer_grid();
  const auto r = validate_conditions(ou(), probes);
  EXPECT_TRUE(r.all_passed());
  // <x, -x> = -x^2 meets the bound with gamma = 1 exactly.
  EXPECT_NEAR(r.get("recurrence").worst_margin, 0.0, 1e-12);
}

TEST(ValidateConditions, SignFlippedDriftFailsEveryProbe) {
  SdeModel m = make_scalar_model("flip", [](double x) { return x; }, [](double) { return std::sqrt(2.0); });
  const auto probes = integer_grid();
  const auto r = validate_conditions(m, probes);
  const auto& rec = r.get("recurrence");
  EXPECT_FALSE(rec.passed);
  EXPECT_NE(rec.detail.find("6 of 6"), std::string::npos) << rec.detail;
}

TEST(ValidateConditions, DegenerateDiffusionFailsEllipticity) {
  SdeModel m = make_scalar_model("flat", [](double x) { return -x; }, [](double) { return 0.0; });
  const auto probes = integer_grid();
  const auto& e = validate_conditions(m, probes).get("ellipticity");
  EXPECT_FALSE(e.passed);
  EXPECT_EQ(e.observed, 0.0);
}

TEST(BuiltinModel, CirFellerViolation) {
  try {
    builtin_model(ModelFamily::CIR, {{"kappa", 1}, {"mu", 0.25}, {"sigma", 1}});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("Feller"), std::string::npos);
  }
}

TEST(BuiltinModel, PowerDriftShape) {
  const SdeModel m = builtin_model(ModelFamily::POWER_DRIFT, {{"alpha", 2}});
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.0}) {
    EXPECT_DOUBLE_EQ(m.drift1(x), -std::copysign(x * x, x));
    EXPECT_NEAR(x * m.drift1(x), -std::pow(std::abs(x), 3.0), 1e-12);
  }
  EXPECT_EQ(m.recurrence_alpha, 2.0);
}

TEST(BuiltinModel, EveryFamilyPassesDefaultProbeGrid) {
  const std::vector<SdeModel> models{
      ou(), builtin_model(ModelFamily::CIR, {{"kappa", 1}, {"mu", 1}, {"sigma", 1}}),
      builtin_model(ModelFamily::GOMPERTZ, {{"kappa", 1}, {"mu", 1}, {"sigma", 1}}),
      builtin_model(ModelFamily::POWER_DRIFT, {{"alpha", 2}})};
  for (const auto& m : models) {
    const auto probes = default_probe_grid(m);
    const auto r = validate_conditions(m, probes);
    for (const auto& c : r.checks) EXPECT_TRUE(c.passed) << m.name << " " << c.name << ": " << c.detail;
  }
}

TEST(BuiltinModel, UnknownFamilyName) {
  EXPECT_FALSE(parse_model_family("heston").has_value());
  EXPECT_EQ(parse_model_family("ou"), ModelFamily::OU);
}

TEST(PolynomialModel, Coefficients) {
  const SdeModel m = polynomial_model({{1.0, -2.0, 0.0, -1.0}}, {{0.5}});
  EXPECT_DOUBLE_EQ(m.drift1(2.0), 1.0 - 4.0 - 8.0);
  EXPECT_DOUBLE_EQ(m.diffusion1(7.0), 0.5);
  EXPECT_TRUE(m.constant_diffusion);
}
