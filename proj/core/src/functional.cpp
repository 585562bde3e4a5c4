#include "ergosim/functional.hpp"

#include "ergosim/error.hpp"

#include <algorithm>
#include <cmath>

namespace ergosim {

Vector FunctionalSpec::eval(double t, const Vector& x) const {
  Vector out(dim_out);
  value(t, x, out);
  return out;
}

double FunctionalSpec::eval1(double t, double x) const {
  if (scalar) return scalar(t, x);
  Vector v(1);
  v[0] = x;
  return eval(t, v)[0];
}

double TimeModulation::operator()(double t) const {
  return 1.0 + amplitude * std::sin(frequency * t);
}

namespace {

FunctionalSpec from_scalar(std::string description,
                           std::function<double(double, double)> fn) {
  FunctionalSpec f;
  f.description = std::move(description);
  f.scalar = std::move(fn);
  f.value = [s = f.scalar](double t, const Vector& x, Vector& out) { out[0] = s(t, x[0]); };
  return f;
}

}  // namespace

FunctionalSpec scalar_functional(std::string description, std::function<double(double)> g,
                                 double growth_p0) {
  FunctionalSpec f = from_scalar(std::move(description), [g](double, double x) { return g(x); });
  f.growth_p0 = growth_p0;
  return f;
}

FunctionalSpec polynomial_functional(const Polynomial& poly,
                                     std::optional<TimeModulation> modulation) {
  std::string desc = "poly[";
  for (std::size_t i = 0; i < poly.coefficients.size(); ++i)
    desc += (i ? "," : "") + std::to_string(poly.coefficients[i]);
  desc += "]";
  FunctionalSpec f;
  if (modulation && modulation->amplitude != 0.0) {
    const TimeModulation m = *modulation;
    desc += "*(1+" + std::to_string(m.amplitude) + "*sin(" + std::to_string(m.frequency) + "t))";
    f = from_scalar(desc, [poly, m](double t, double x) { return m(t) * poly(x); });
    f.time_factor = m;
    f.time_homogeneous = false;
    // |m(t) - m(s)| <= amplitude * frequency * |t - s|
    f.modulus_q0 = static_cast<double>(poly.degree());
  } else {
    f = from_scalar(desc, [poly](double, double x) { return poly(x); });
  }
  f.growth_p0 = static_cast<double>(poly.degree());
  return f;
}

FunctionalSpec zero_functional(int dim_state, int dim_out) {
  FunctionalSpec f;
  f.description = "zero";
  f.dim_state = dim_state;
  f.dim_out = dim_out;
  f.value = [](double, const Vector&, Vector& out) { out.setZero(); };
  if (dim_state == 1 && dim_out == 1) f.scalar = [](double, double) { return 0.0; };
  f.centralized = true;
  f.growth_p0 = 0.0;
  return f;
}

FunctionalSpec scaled(const FunctionalSpec& f, double c) {
  FunctionalSpec g = f;
  g.description = std::to_string(c) + "*(" + f.description + ")";
  g.value = [v = f.value, c](double t, const Vector& x, Vector& out) {
    v(t, x, out);
    out *= c;
  };
  if (f.scalar) g.scalar = [s = f.scalar, c](double t, double x) { return c * s(t, x); };
  return g;
}

Polynomial hermite_polynomial(int n) {
  // He_{k+1} = x He_k - k He_{k-1}
  std::vector<double> prev{1.0};
  if (n == 0) return {prev};
  std::vector<double> cur{0.0, 1.0};
  for (int k = 1; k < n; ++k) {
    std::vector<double> next(cur.size() + 1, 0.0);
    for (std::size_t i = 0; i < cur.size(); ++i) next[i + 1] += cur[i];
    for (std::size_t i = 0; i < prev.size(); ++i) next[i] -= k * prev[i];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return {cur};
}

Vector pi_mean(const FunctionalSpec& f, const InvariantDensity1D& pi, double t,
               const QuadratureConfig& quad) {
  if (f.dim_state != 1) throw Error("functional", "pi_mean requires a one-dimensional state");
  Vector mean(f.dim_out);
  QuadratureConfig trimmed = quad;
  trimmed.endpoint_margin = 1e-5;
  trimmed.finite_margin = 1e-5;
  for (int l = 0; l < f.dim_out; ++l) {
    const auto component = [&](double x) {
      if (f.scalar) return f.scalar(t, x);
      return f.eval(t, Vector::Constant(1, x))[l];
    };
    const auto full = pi.expectation(component, quad);
    const auto part = pi.expectation(component, trimmed);
    const double scale = std::max(1.0, std::abs(full.value));
    if (!std::isfinite(full.value) || !full.converged ||
        std::abs(full.value - part.value) > 1e-6 * scale)
      throw Error("functional", "f not pi-integrable");
    mean[l] = full.value;
  }
  return mean;
}

FunctionalSpec centralize(const FunctionalSpec& f, const InvariantDensity1D& pi,
                          const QuadratureConfig& quad) {
  FunctionalSpec g = f;
  g.centralized = true;
  if (f.time_homogeneous || f.time_factor) {
    Vector shift = pi_mean(f, pi, 0.0, quad);
    if (f.time_factor) shift /= f.time_factor(0.0);
    g.description = "centralized(" + f.description + ")";
    if (f.time_factor) {
      g.value = [v = f.value, shift, m = f.time_factor](double t, const Vector& x, Vector& out) {
        v(t, x, out);
        out -= m(t) * shift;
      };
      if (f.scalar)
        g.scalar = [s = f.scalar, c = shift[0], m = f.time_factor](double t, double x) {
          return s(t, x) - m(t) * c;
        };
    } else {
      g.value = [v = f.value, shift](double t, const Vector& x, Vector& out) {
        v(t, x, out);
        out -= shift;
      };
      if (f.scalar)
        g.scalar = [s = f.scalar, c = shift[0]](double t, double x) { return s(t, x) - c; };
    }
    return g;
  }
  // Pay a quadrature per evaluation; the density handle is shared.
  auto density = std::make_shared<const InvariantDensity1D>(pi);
  g.description = "centralized(" + f.description + ")";
  g.value = [f, density, quad](double t, const Vector& x, Vector& out) {
    f.value(t, x, out);
    out -= pi_mean(f, *density, t, quad);
  };
  if (f.scalar)
    g.scalar = [f, density, quad](double t, double x) {
      return f.scalar(t, x) - pi_mean(f, *density, t, quad)[0];
    };
  return g;
}

ConditionCheck check_functional_growth(const FunctionalSpec& f, std::span<const Vector> probes,
                                       double horizon, int time_samples) {
  ConditionCheck c;
  c.name = "functional_growth";
  std::vector<double> ratios;
  for (const auto& x : probes) {
    double sup = 0.0;
    for (int k = 0; k < time_samples; ++k) {
      const double t = horizon * k / std::max(1, time_samples - 1);
      sup = std::max(sup, f.eval(t, x).norm());
    }
    ratios.push_back(sup / std::pow(1.0 + x.norm(), f.growth_p0));
  }
  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  const double med = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
  const double mx = sorted.empty() ? 0.0 : sorted.back();
  const auto k = static_cast<std::size_t>(std::max_element(ratios.begin(), ratios.end()) - ratios.begin());
  if (!ratios.empty()) c.worst_probe = probes[k];
  c.fitted_constant = mx;
  c.observed = med;
  c.worst_margin = 10.0 * med - mx;
  c.passed = std::isfinite(mx) && (mx == 0.0 || mx <= 10.0 * med);
  c.detail = "fitted C(T) = " + std::to_string(mx) + " for p0 = " + std::to_string(f.growth_p0);
  return c;
}

}  // namespace ergosim
