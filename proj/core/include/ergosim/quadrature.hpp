#pragma once

#include <cstddef>
#include <functional>

namespace ergosim {

struct QuadratureConfig {
  double abs_tolerance = 1e-10;
  std::size_t max_subdivisions = std::size_t{1} << 20;
  /// Endpoints of a tan-mapped infinite range are pulled in by this much
  /// (in the angle variable) so the integrand is never evaluated at infinity.
  double endpoint_margin = 1e-9;
  /// Same, for finite endpoints; kept tiny so no real mass is cut off.
  double finite_margin = 1e-15;
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;
};

/// Adaptive composite Simpson rule on a finite interval [a, b].
/// Non-finite integrand values propagate into the result; callers decide.
QuadratureResult adaptive_simpson(const std::function<double(double)>& fn,
                                  double a, double b,
                                  const QuadratureConfig& cfg = {});

/// Change of variables x = anchor + scale * tan(u) used to integrate over
/// half-lines and the full line.
struct TanMap {
  double anchor = 0.0;
  double scale = 1.0;

  double to_x(double u) const;
  double to_u(double x) const;
  double jacobian(double u) const;  // dx/du
};

/// Integrate fn over (lo, hi), either end possibly infinite, through a TanMap.
QuadratureResult integrate_mapped(const std::function<double(double)>& fn,
                                  double lo, double hi, const TanMap& map,
                                  const QuadratureConfig& cfg = {});

}  // namespace ergosim
