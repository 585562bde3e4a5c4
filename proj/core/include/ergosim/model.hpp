#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ergosim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Open interval (lo, hi); either end may be infinite.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double x) const { return x > lo && x < hi; }
  bool lower_infinite() const { return lo == -std::numeric_limits<double>::infinity(); }
  bool upper_infinite() const { return hi == std::numeric_limits<double>::infinity(); }
  bool full_line() const { return lower_infinite() && upper_infinite(); }
};

/// Dense polynomial c0 + c1 x + c2 x^2 + ...
struct Polynomial {
  std::vector<double> coefficients;

  double operator()(double x) const {
    double acc = 0.0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * x + *it;
    return acc;
  }
  int degree() const;
};

using DriftFn = std::function<void(const Vector& x, Vector& out)>;
using DiffusionFn = std::function<void(const Vector& x, Matrix& out)>;
using ScalarFn = std::function<double(double)>;

/// Diffusion dX = b(X)dt + sigma(X)dW together with the regularity metadata
/// the fluctuation theorems are stated in terms of.
struct SdeModel {
  std::string name;
  std::map<std::string, double> params;  // provenance only

  int dim_state = 1;
  int dim_noise = 1;
  DriftFn drift;
  DiffusionFn diffusion;

  /// Present for d = m = 1 models; the simulator uses these directly.
  ScalarFn scalar_drift;
  ScalarFn scalar_diffusion;

  double recurrence_alpha = 1.0;
  double recurrence_gamma = 1.0;
  double recurrence_radius = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  /// Set for models (CIR) whose diffusion degenerates on the boundary of the
  /// state space; the ellipticity audit is then reported as waived.
  bool ellipticity_waived = false;
  double holder_nu = 1.0;
  double drift_growth_alpha_bar = 1.0;
  bool constant_diffusion = false;
  Vector initial_state;
  Interval support;

  /// When set, trajectories are simulated for Y = chart_to(X) under
  /// chart_model and mapped back through chart_from (Gompertz: Y = ln X).
  std::shared_ptr<const SdeModel> chart_model;
  ScalarFn chart_to;
  ScalarFn chart_from;

  bool is_scalar() const { return dim_state == 1 && dim_noise == 1 && scalar_drift && scalar_diffusion; }

  Vector drift_at(const Vector& x) const;
  Matrix diffusion_at(const Vector& x) const;
  /// a = sigma sigma^T
  Matrix covariance_at(const Vector& x) const;

  double drift1(double x) const;
  double diffusion1(double x) const;
  double a1(double x) const {
    const double s = diffusion1(x);
    return s * s;
  }
};

/// Builds a d = m = 1 model from scalar coefficients and fills the vector forms.
SdeModel make_scalar_model(std::string name, ScalarFn drift, ScalarFn diffusion);

enum class ModelFamily { OU, CIR, GOMPERTZ, POWER_DRIFT };

std::optional<ModelFamily> parse_model_family(const std::string& name);
std::string to_string(ModelFamily family);

/// Parameters: OU/CIR/GOMPERTZ take kappa, mu, sigma (and optional x0);
/// POWER_DRIFT takes alpha (and optional sigma, x0).
SdeModel builtin_model(ModelFamily family, const std::map<std::string, double>& params);

/// One-dimensional model with polynomial drift and diffusion coefficients.
/// Regularity metadata is declared by the caller.
SdeModel polynomial_model(const Polynomial& drift, const Polynomial& diffusion);

struct ConditionCheck {
  std::string name;
  bool passed = true;
  bool waived = false;
  double worst_margin = 0.0;  // smallest slack seen; negative means violated
  Vector worst_probe;
  double fitted_constant = 0.0;
  double observed = 0.0;  // e.g. smallest eigenvalue of a(x) for ellipticity
  std::string detail;
};

struct ConditionReport {
  std::vector<ConditionCheck> checks;  // recurrence, ellipticity, holder, drift_growth
  bool validated_in_chart = false;

  bool all_passed() const;
  const ConditionCheck& get(const std::string& name) const;
};

/// Tensor grid of `points_per_axis` points per axis over [-5, 5] scaled by
/// max(1, B); half-line supports get the grid mapped into (lo, lo + 10 max(1,B)].
std::vector<Vector> default_probe_grid(const SdeModel& model, int points_per_axis = 41);

/// Sampled audit of the recurrence, uniform ellipticity, Hölder continuity
/// and drift growth hypotheses on a finite probe set.
ConditionReport validate_conditions(const SdeModel& model, std::span<const Vector> probes);

}  // namespace ergosim
