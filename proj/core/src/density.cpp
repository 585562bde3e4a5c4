#include "ergosim/density.hpp"

#include "ergosim/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ergosim {

namespace {

constexpr std::size_t kNodes = 4096;
constexpr double kPhiTolerance = 1e-13;
constexpr double kDivergenceMargin = 1e-5;

}  // namespace

double InvariantDensity1D::log_ratio(double y, double x) const {
  if (y == x) return 0.0;
  const auto g = [this](double z) { return 2.0 * b_(z) / a_(z); };
  QuadratureConfig cfg = quad_;
  const double rough = std::abs((y - x) * 0.5 * (g(x) + g(y)));
  cfg.abs_tolerance = kPhiTolerance * std::max(1.0, std::isfinite(rough) ? rough : 1.0);
  return adaptive_simpson(g, x, y, cfg).value;
}

double InvariantDensity1D::phi_from_node(std::size_t k, double x) const {
  return node_phi_[k] + log_ratio(x, node_x_[k]);
}

std::size_t InvariantDensity1D::nearest_node(double x) const {
  auto it = std::lower_bound(node_x_.begin(), node_x_.end(), x);
  if (it == node_x_.end()) return node_x_.size() - 1;
  if (it == node_x_.begin()) return 0;
  const auto k = static_cast<std::size_t>(it - node_x_.begin());
  return (x - node_x_[k - 1] < node_x_[k] - x) ? k - 1 : k;
}

double InvariantDensity1D::log_unnormalized(double x) const {
  if (!support_.contains(x)) return -INFINITY;
  return phi_from_node(nearest_node(x), x);
}

double InvariantDensity1D::log_density_unscaled(double x) const {
  return log_unnormalized(x) - std::log(a_(x));
}

double InvariantDensity1D::density(double x) const {
  if (!support_.contains(x)) return 0.0;
  const double phi = log_unnormalized(x);
  if (phi == -INFINITY) return 0.0;
  return std::exp(phi - std::log(a_(x)) - shift_) / mass_;
}

double InvariantDensity1D::normalizer() const { return std::exp(log_normalizer_); }

void InvariantDensity1D::build_nodes() {
  const double ulo = map_.to_u(support_.lo);
  const double uhi = map_.to_u(support_.hi);
  const double du = (uhi - ulo) / static_cast<double>(kNodes);
  node_x_.resize(kNodes);
  for (std::size_t k = 0; k < kNodes; ++k)
    node_x_[k] = map_.to_x(ulo + (static_cast<double>(k) + 0.5) * du);

  node_phi_.assign(kNodes, 0.0);
  const double anchor = map_.anchor;
  const auto first_right = static_cast<std::size_t>(
      std::lower_bound(node_x_.begin(), node_x_.end(), anchor) - node_x_.begin());
  for (std::size_t k = first_right; k < kNodes; ++k) {
    const double from = (k == first_right) ? anchor : node_x_[k - 1];
    const double base = (k == first_right) ? 0.0 : node_phi_[k - 1];
    node_phi_[k] = base + log_ratio(node_x_[k], from);
  }
  for (std::size_t k = first_right; k-- > 0;) {
    const double from = (k + 1 == first_right) ? anchor : node_x_[k + 1];
    const double base = (k + 1 == first_right) ? 0.0 : node_phi_[k + 1];
    node_phi_[k] = base + log_ratio(node_x_[k], from);
  }
}

double InvariantDensity1D::cdf(double x) const {
  if (x <= support_.lo) return 0.0;
  if (x >= support_.hi) return 1.0;
  if (x <= node_x_.front() || x >= node_x_.back()) {
    const auto r = integrate_mapped([this](double z) { return density(z); }, support_.lo, x, map_, quad_);
    return std::clamp(r.value, 0.0, 1.0);
  }
  const auto k = static_cast<std::size_t>(
      std::upper_bound(node_x_.begin(), node_x_.end(), x) - node_x_.begin() - 1);
  const double h = node_x_[k + 1] - node_x_[k];
  const double t = (x - node_x_[k]) / h;
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * node_cdf_[k] + (t3 - 2 * t2 + t) * h * node_pdf_[k] +
         (-2 * t3 + 3 * t2) * node_cdf_[k + 1] + (t3 - t2) * h * node_pdf_[k + 1];
}

double InvariantDensity1D::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw Error("density", "quantile level must lie in (0, 1)");
  if (p <= node_cdf_.front() || p >= node_cdf_.back()) {
    // Far tail: bisection on the directly integrated CDF.
    double lo = p <= node_cdf_.front() ? map_.to_x(map_.to_u(support_.lo) + 1e-12) : node_x_.back();
    double hi = p <= node_cdf_.front() ? node_x_.front() : map_.to_x(map_.to_u(support_.hi) - 1e-12);
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
  const auto k = static_cast<std::size_t>(
      std::upper_bound(node_cdf_.begin(), node_cdf_.end(), p) - node_cdf_.begin() - 1);
  const double h = node_x_[k + 1] - node_x_[k];
  const double c0 = node_cdf_[k];
  const double c1 = node_cdf_[k + 1];
  const double m0 = h * node_pdf_[k];
  const double m1 = h * node_pdf_[k + 1];
  double lo = 0.0;
  double hi = 1.0;
  double t = (c1 > c0) ? (p - c0) / (c1 - c0) : 0.5;
  for (int it = 0; it < 60; ++it) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double val = (2 * t3 - 3 * t2 + 1) * c0 + (t3 - 2 * t2 + t) * m0 +
                       (-2 * t3 + 3 * t2) * c1 + (t3 - t2) * m1 - p;
    const double der = (6 * t2 - 6 * t) * c0 + (3 * t2 - 4 * t + 1) * m0 +
                       (-6 * t2 + 6 * t) * c1 + (3 * t2 - 2 * t) * m1;
    if (val < 0) lo = t; else hi = t;
    if (std::abs(val) < 1e-15) break;
    double next = (der > 0) ? t - val / der : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-15) {
      t = next;
      break;
    }
    t = next;
  }
  return node_x_[k] + t * h;
}

QuadratureResult InvariantDensity1D::expectation(const std::function<double(double)>& g,
                                                 const QuadratureConfig& quad) const {
  return integrate_mapped(
      [&](double x) {
        const double p = density(x);
        return p == 0.0 ? 0.0 : g(x) * p;
      },
      support_.lo, support_.hi, map_, quad);
}

InvariantDensity1D invariant_density_1d(const SdeModel& model, const Interval& support,
                                        const QuadratureConfig& quad) {
  if (model.dim_state != 1) throw Error("density", "invariant density requires dim_state = 1");
  if (!(support.lo < support.hi)) throw Error("density", "empty support interval");

  InvariantDensity1D pi;
  if (model.scalar_drift)
    pi.b_ = model.scalar_drift;
  else
    pi.b_ = [m = model](double x) { return m.drift1(x); };
  if (model.scalar_diffusion)
    pi.a_ = [s = model.scalar_diffusion](double x) {
      const double v = s(x);
      return v * v;
    };
  else
    pi.a_ = [m = model](double x) { return m.a1(x); };
  pi.support_ = support;
  pi.quad_ = quad;

  // Provisional anchor: 0 on the full line, one unit inside a finite end otherwise.
  double anchor = 0.0;
  if (!support.contains(anchor)) {
    if (!support.lower_infinite() && !support.upper_infinite())
      anchor = 0.5 * (support.lo + support.hi);
    else if (!support.lower_infinite())
      anchor = support.lo + 1.0;
    else
      anchor = support.hi - 1.0;
  }
  pi.map_ = TanMap{anchor, 1.0};
  pi.build_nodes();

  // Mode of pi = argmax (Phi - log a), refined by golden section.
  std::size_t best = 0;
  double best_val = -INFINITY;
  for (std::size_t k = 0; k < pi.node_x_.size(); ++k) {
    const double v = pi.node_phi_[k] - std::log(pi.a_(pi.node_x_[k]));
    if (!std::isfinite(v) && v > 0)
      throw Error("density", "model not positive recurrent on support");
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  {
    double lo = pi.node_x_[best > 0 ? best - 1 : 0];
    double hi = pi.node_x_[std::min(best + 1, pi.node_x_.size() - 1)];
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo);
    double d = lo + gr * (hi - lo);
    double fc = pi.log_density_unscaled(c);
    double fd = pi.log_density_unscaled(d);
    for (int it = 0; it < 100 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo)); ++it) {
      if (fc > fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - gr * (hi - lo);
        fc = pi.log_density_unscaled(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + gr * (hi - lo);
        fd = pi.log_density_unscaled(d);
      }
    }
    pi.mode_ = 0.5 * (lo + hi);
  }

  if (!support.full_line()) {
    pi.map_.anchor = pi.mode_;
    pi.build_nodes();
  }

  pi.shift_ = -INFINITY;
  for (std::size_t k = 0; k < pi.node_x_.size(); ++k)
    pi.shift_ = std::max(pi.shift_, pi.node_phi_[k] - std::log(pi.a_(pi.node_x_[k])));
  if (!std::isfinite(pi.shift_)) throw Error("density", "model not positive recurrent on support");

  const auto unnormalized = [&pi](double x) {
    const double phi = pi.log_unnormalized(x);
    if (phi == -INFINITY) return 0.0;
    return std::exp(phi - std::log(pi.a_(x)) - pi.shift_);
  };
  const auto full = integrate_mapped(unnormalized, support.lo, support.hi, pi.map_, quad);
  QuadratureConfig inner = quad;
  inner.endpoint_margin = kDivergenceMargin;
  inner.finite_margin = kDivergenceMargin;
  const auto trimmed = integrate_mapped(unnormalized, support.lo, support.hi, pi.map_, inner);
  if (!std::isfinite(full.value) || !full.converged || full.value <= 0.0 ||
      std::abs(full.value - trimmed.value) > 1e-6 * full.value)
    throw Error("density", "model not positive recurrent on support");
  pi.mass_ = full.value;
  pi.log_normalizer_ = -pi.shift_ - std::log(pi.mass_);

  const std::size_t n = pi.node_x_.size();
  pi.node_pdf_.resize(n);
  pi.node_cdf_.resize(n);
  for (std::size_t k = 0; k < n; ++k) pi.node_pdf_[k] = pi.density(pi.node_x_[k]);
  const auto dens = [&pi](double x) { return pi.density(x); };
  pi.node_cdf_[0] = integrate_mapped(dens, support.lo, pi.node_x_[0], pi.map_, quad).value;
  QuadratureConfig local = quad;
  local.abs_tolerance = quad.abs_tolerance / static_cast<double>(n);
  for (std::size_t k = 1; k < n; ++k)
    pi.node_cdf_[k] = pi.node_cdf_[k - 1] +
                      adaptive_simpson(dens, pi.node_x_[k - 1], pi.node_x_[k], local).value;
  return pi;
}

InvariantDensity1D invariant_density_1d(const SdeModel& model, const QuadratureConfig& quad) {
  return invariant_density_1d(model, model.support, quad);
}

}  // namespace ergosim
