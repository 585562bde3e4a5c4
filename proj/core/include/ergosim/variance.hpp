#pragma once

#include "ergosim/density.hpp"
#include "ergosim/euler.hpp"
#include "ergosim/functional.hpp"
#include "ergosim/model.hpp"
#include "ergosim/poisson1d.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ergosim {

enum class CovarianceRoute { GRADIENT_FORM, AUTOCORRELATION_FORM };

std::string to_string(CovarianceRoute route);

/// M_f(t) at a list of times; entrywise linear in between, constant outside.
struct CovarianceCurve {
  std::vector<double> times;
  std::vector<Matrix> matrices;
  CovarianceRoute route = CovarianceRoute::GRADIENT_FORM;
  std::vector<Matrix> standard_errors;  // autocorrelation route only
  /// Autocorrelation route: largest |tail fit at S| / |value at 0|.
  double tail_ratio = 0.0;
  /// Set when the stationary start came from burn-in rather than pi.
  bool lower_confidence = false;

  int dim() const { return matrices.empty() ? 0 : static_cast<int>(matrices.front().rows()); }
  Matrix at(double t) const;
};

struct GradientFormOptions {
  QuadratureConfig quad;
  /// Tail estimate above this fraction of the bulk integral is an error.
  double max_tail_fraction = 0.01;
};

/// M_f(t) = int u'(t,x) a(x) u'(t,x)^T pi(dx) over the solution grid, with
/// the tails beyond the grid extrapolated by a power-law envelope of u'.
/// `solutions[i]` solves the Poisson equation at `times[i]`.
CovarianceCurve mf_gradient_form(const std::vector<PoissonSolution>& solutions,
                                 const SdeModel& model, const InvariantDensity1D& pi,
                                 const std::vector<double>& times,
                                 const GradientFormOptions& options = {});

struct AutocorrelationOptions {
  double horizon_s = 10.0;
  std::size_t n_paths = 100000;
  double fine_step = 0.01;
  std::size_t blocks = 32;
  unsigned threads = 0;
  /// Largest admissible |tail at S| / |value at 0|.
  double max_tail_ratio = 0.01;
};

/// M_f(t) = int int_0^inf [f_i P_s f_j + f_j P_s f_i] ds dpi from unit-speed
/// Euler paths started at stationarity, with an exponential tail correction
/// and block-jackknife standard errors. `pi` gives the stationary start in
/// 1D; without it the start is a burn-in of length 10 S from x0.
CovarianceCurve mf_autocorrelation_form(const SdeModel& model, const InvariantDensity1D* pi,
                                        const FunctionalSpec& f, double t,
                                        std::uint64_t master_seed,
                                        const AutocorrelationOptions& options = {});

/// Piecewise-linear path with xi(0) = 0.
class RatePath {
 public:
  /// Throws Error("variance", ...) unless times start at 0, increase strictly
  /// and xi(0) = 0.
  static RatePath make(std::vector<double> times, std::vector<Vector> values);
  /// xi(t) = v t on [0, horizon].
  static RatePath linear(const Vector& slope, double horizon);

  const std::vector<double>& times() const { return times_; }
  const std::vector<Vector>& values() const { return values_; }
  double horizon() const { return times_.back(); }
  int dim() const { return static_cast<int>(values_.front().size()); }
  /// Right-continuous derivative; zero past the last knot.
  Vector slope_at(double t) const;
  Vector value_at(double t) const;

 private:
  std::vector<double> times_;
  std::vector<Vector> values_;
};

/// I(xi) = 1/2 int xi'(s)^T M(s)^{-1} xi'(s) ds, exact for piecewise-linear
/// xi and piecewise-linear M. Throws Error("variance", "degenerate covariance;
/// rate undefined") when an eigenvalue of M is at most 1e-10.
double rate_function(const RatePath& path, const CovarianceCurve& curve);

/// phi(x, s) = sigma(x)^T u'(s, x)^T M(s)^{-1} xi'(s).
class OptimalControl {
 public:
  OptimalControl(RatePath path, std::vector<PoissonSolution> solutions, CovarianceCurve curve,
                 SdeModel model);
  double operator()(double x, double s) const;
  const RatePath& path() const { return path_; }
  const CovarianceCurve& curve() const { return curve_; }
  /// Breakpoints in s where phi may jump or kink.
  std::vector<double> breakpoints() const;
  /// Deterministic control psi(s) = phi(x, s) at a frozen state.
  ControlFunction frozen_at(double x, double l2_bound) const;

 private:
  double uprime(double x, double s, int component) const;

  RatePath path_;
  std::vector<PoissonSolution> solutions_;
  CovarianceCurve curve_;
  SdeModel model_;
};

OptimalControl optimal_control(const RatePath& path, const std::vector<PoissonSolution>& solutions,
                               const CovarianceCurve& curve, const SdeModel& model);

/// int_0^T int phi(x, s)^2 pi(dx) ds by mapped quadrature in x and
/// Gauss-Legendre in s between breakpoints.
double control_cost(const OptimalControl& phi, const InvariantDensity1D& pi,
                    const QuadratureConfig& quad = {});

/// {"times": [...], "matrices": [[[...]]], "route": "...", "stderr": [...]}
void write_covariance_json(std::ostream& out, const CovarianceCurve& curve);

}  // namespace ergosim
