#pragma once

#include "ergosim/density.hpp"
#include "ergosim/functional.hpp"
#include "ergosim/model.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ergosim {

/// Growth exponents of |u|, |u'|, |u''| in |x|. A bounded (below floor)
/// quantity is reported as -inf with its flag set; logarithmic growth of u
/// is reported as p1 = 0 with `p1_logarithmic`.
struct TailExponents {
  double p1 = 0.0;
  double p2 = 0.0;
  double p3 = 0.0;
  bool p1_bounded = false;
  bool p2_bounded = false;
  bool p3_bounded = false;
  bool p1_logarithmic = false;
};

struct PoissonOptions {
  /// Largest spacing of the internal refinement of the requested grid.
  double max_spacing = 0.02;
  QuadratureConfig quad;
  /// Tail fraction used to populate PoissonSolution::fitted_exponents.
  double tail_fraction = 0.25;
};

/// Solution of (a/2) u'' + b u' = -f(t, .) on a grid, one column per
/// component of f, normalized by u(anchor) = 0.
struct PoissonSolution {
  std::vector<double> grid;
  Matrix u;               // grid.size() x n
  Matrix u_prime;
  Matrix u_double_prime;
  Matrix f_values;
  double time_parameter = 0.0;
  double anchor = 0.0;
  double switch_point = 0.0;  // left representation below, right above
  std::vector<double> dropped;  // grid points removed for a * pi < 1e-300
  std::vector<std::string> warnings;
  std::optional<TailExponents> fitted_exponents;  // component 0
  /// Tail exponent of |b/a| ~ |x|^theta, when fitted.
  std::optional<double> drift_ratio_exponent;

  /// Refined table the grid values are sampled from.
  std::vector<double> dense_grid;
  Matrix dense_u;
  Matrix dense_u_prime;
  Matrix dense_u_double_prime;

  int components() const { return static_cast<int>(u.cols()); }
  /// u'(x) by cubic Hermite interpolation inside the dense table and by the
  /// explicit representation outside it.
  double uprime_at(double x, int component = 0) const;
  double u_at(double x, int component = 0) const;

  /// Explicit-representation u' at an arbitrary point.
  std::function<double(double x, int component)> direct_uprime;
};

/// pre: model.dim_state == 1, f centralized at time t, grid sorted inside pi.support().
/// Throws Error("poisson1d", ...) if fewer than 3 grid points survive.
PoissonSolution solve_poisson_1d(const SdeModel& model, const InvariantDensity1D& pi,
                                 const FunctionalSpec& f, double t, const std::vector<double>& grid,
                                 const PoissonOptions& options = {});

/// Both explicit forms of u' at the given points:
///   left  = -2 / (a pi) * int_lo^x f pi,   right = 2 / (a pi) * int_x^hi f pi.
struct UPrimeRepresentations {
  std::vector<double> x;
  std::vector<double> left;
  std::vector<double> right;
};
UPrimeRepresentations uprime_representations(const InvariantDensity1D& pi, const FunctionalSpec& f,
                                             double t, const std::vector<double>& points,
                                             int component = 0, const PoissonOptions& options = {});

/// Uniform grid of `n` points on [lo, hi].
std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

/// Log-log slopes of max(|value|, 1e-12) against |x| over the outer
/// `tail_fraction` of the grid on every side that reaches an infinite end of
/// the support, maximized over sides. Requires 20 tail points per side.
TailExponents fit_tail_exponents(const PoissonSolution& sol, double tail_fraction,
                                 const Interval& support, int component = 0);

/// Exponents entering the MDP growth assumption.
struct ExponentSet {
  double p0 = 0.0;
  double q0 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double p3 = 0.0;
  double q1 = 0.0;
  double q2 = 0.0;
};

/// Exponent relations for general dimension:
/// p1 = (p0 - a + 1)^+, p2 = max(p1 + 2 abar, p0), q1 = (q0 - a + 1)^+,
/// q2 = max(q1 + 2 abar, q0), p3 = max(p0 + 2 abar, p1 + 4 abar).
ExponentSet exponents_from_growth(double p0, double q0, double alpha, double alpha_bar);

/// Measured exponents from a 1D fit. Homogeneous f have q0 = q1 = q2 = 0;
/// bounded quantities enter as 0.
ExponentSet exponents_from_fit(const TailExponents& fit, double p0, double q0 = 0.0,
                               bool time_homogeneous = true);

struct InequalityResult {
  std::string name;
  std::string statement;
  bool passed = true;
  bool waived = false;
};

struct ExponentAudit {
  double alpha = 0.0;
  ExponentSet exponents;
  bool verdict_mdp = false;
  std::vector<InequalityResult> verdict_detail;
  std::string failed_summary() const;
};

/// Evaluates (i) p1 <= (1+a)/2; (ii) p2 < a (a <= 1) or p2 <= (1+a)/2 (a > 1);
/// (iii) max(q0/2, q2) <= a and q1 <= 2a 1{a<=1} + a 1{a>1}; (iv) p3 <= a.
/// `slack` is added to every right-hand side to absorb fitting noise.
ExponentAudit audit_mdp_exponents(double alpha, const ExponentSet& measured,
                                  bool constant_diffusion = false, double slack = 0.0);

/// CSV with columns x,u_1,u_prime_1,u_dprime_1,... per component.
void write_poisson_csv(std::ostream& out, const PoissonSolution& sol);

}  // namespace ergosim
