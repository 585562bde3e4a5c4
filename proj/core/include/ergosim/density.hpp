#pragma once

#include "ergosim/model.hpp"
#include "ergosim/quadrature.hpp"

#include <functional>
#include <vector>

namespace ergosim {

/// Invariant density of a one-dimensional diffusion,
///   pi(z) = B / a(z) * exp(Phi(z)),   Phi(z) = int_anchor^z 2 b / a,
/// tabulated on a tan-mapped node set so that Phi, the density, the CDF and
/// the quantile function are cheap to evaluate anywhere on the support.
class InvariantDensity1D {
 public:
  double density(double x) const;
  /// Phi(x); -inf outside the support.
  double log_unnormalized(double x) const;
  /// Phi(y) - Phi(x) evaluated by a single local quadrature.
  double log_ratio(double y, double x) const;
  /// log B, so that log pi = log B - log a + Phi.
  double log_normalizer() const { return log_normalizer_; }
  double normalizer() const;

  const Interval& support() const { return support_; }
  double anchor() const { return map_.anchor; }
  double mode() const { return mode_; }
  const TanMap& map() const { return map_; }

  double cdf(double x) const;
  double quantile(double p) const;

  /// int g d(pi) by mapped adaptive quadrature.
  QuadratureResult expectation(const std::function<double(double)>& g,
                               const QuadratureConfig& quad = {}) const;

  double diffusion_sq(double x) const { return a_(x); }
  double drift(double x) const { return b_(x); }

 private:
  friend InvariantDensity1D invariant_density_1d(const SdeModel&, const Interval&,
                                                 const QuadratureConfig&);
  InvariantDensity1D() = default;

  double phi_from_node(std::size_t k, double x) const;
  std::size_t nearest_node(double x) const;
  void build_nodes();
  double log_density_unscaled(double x) const;

  std::function<double(double)> b_;
  std::function<double(double)> a_;
  Interval support_;
  TanMap map_;
  QuadratureConfig quad_;
  double mode_ = 0.0;
  double shift_ = 0.0;
  double mass_ = 1.0;  // integral of exp(Phi - log a - shift)
  double log_normalizer_ = 0.0;
  std::vector<double> node_x_;
  std::vector<double> node_phi_;
  std::vector<double> node_pdf_;
  std::vector<double> node_cdf_;
};

/// pre: model.dim_state == 1 and a > 0 on the interior of `support`.
/// Throws Error("density", "model not positive recurrent on support") when the
/// unnormalized density is not integrable.
InvariantDensity1D invariant_density_1d(const SdeModel& model, const Interval& support,
                                        const QuadratureConfig& quad = {});

/// Convenience overload using model.support.
InvariantDensity1D invariant_density_1d(const SdeModel& model, const QuadratureConfig& quad = {});

}  // namespace ergosim
