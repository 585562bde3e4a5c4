#pragma once

#include "ergosim/density.hpp"
#include "ergosim/model.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>

namespace ergosim {

/// Test function f : [0, T] x R^d -> R^n together with its growth metadata.
struct FunctionalSpec {
  std::string description;
  int dim_state = 1;
  int dim_out = 1;
  std::function<void(double t, const Vector& x, Vector& out)> value;
  /// Present when dim_state == dim_out == 1.
  std::function<double(double t, double x)> scalar;
  /// Optional separable structure f(t, x) = time_factor(t) * g(x).
  std::function<double(double)> time_factor;
  double growth_p0 = 0.0;
  double modulus_q0 = 0.0;
  bool time_homogeneous = true;
  bool centralized = false;

  bool is_scalar() const { return dim_state == 1 && dim_out == 1 && static_cast<bool>(scalar); }
  Vector eval(double t, const Vector& x) const;
  double eval1(double t, double x) const;
};

/// m(t) = 1 + amplitude * sin(frequency * t)
struct TimeModulation {
  double amplitude = 0.0;
  double frequency = 0.0;
  double operator()(double t) const;
};

FunctionalSpec scalar_functional(std::string description, std::function<double(double)> g,
                                 double growth_p0);
FunctionalSpec polynomial_functional(const Polynomial& poly,
                                     std::optional<TimeModulation> modulation = std::nullopt);
/// Identically zero; already centralized.
FunctionalSpec zero_functional(int dim_state = 1, int dim_out = 1);
/// c * f; keeps the centralized flag.
FunctionalSpec scaled(const FunctionalSpec& f, double c);
/// Probabilists' Hermite polynomial He_n; centered under N(0, 1).
Polynomial hermite_polynomial(int n);

/// pi(f(t, .)) for each output component.
Vector pi_mean(const FunctionalSpec& f, const InvariantDensity1D& pi, double t,
               const QuadratureConfig& quad = {});

/// Returns f - pi(f) with centralized = true. Homogeneous and separable f are
/// shifted by a precomputed constant; general inhomogeneous f recompute the
/// mean by quadrature on every evaluation.
FunctionalSpec centralize(const FunctionalSpec& f, const InvariantDensity1D& pi,
                          const QuadratureConfig& quad = {});

/// Sampled audit of sup_{t<=T} |f(t,x)| <= C (1 + |x|)^p0 on probe states;
/// the constant is fitted, the verdict uses the same 10x-median rule as the
/// model conditions.
ConditionCheck check_functional_growth(const FunctionalSpec& f, std::span<const Vector> probes,
                                       double horizon, int time_samples = 11);

}  // namespace ergosim
