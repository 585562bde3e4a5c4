#include "ergosim/poisson1d.hpp"

#include "ergosim/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ergosim {

namespace {

constexpr double kFloor = 1e-12;
constexpr double kLogUnderflow = -690.7755278982137;  // ln(1e-300)

// 10-point Gauss-Legendre on [-1, 1]
constexpr std::array<double, 10> kGLx = {
    -0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472,
    -0.1488743389816312, 0.1488743389816312,  0.4333953941292472,  0.6794095682990244,
    0.8650633666889845,  0.9739065285171717};
constexpr std::array<double, 10> kGLw = {
    0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963,
    0.2955242247147529, 0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
    0.1494513491505806, 0.0666713443086881};

template <class Fn>
double gauss_legendre(const Fn& fn, double lo, double hi) {
  const double c = 0.5 * (lo + hi);
  const double h = 0.5 * (hi - lo);
  double acc = 0.0;
  for (std::size_t i = 0; i < kGLx.size(); ++i) acc += kGLw[i] * fn(c + h * kGLx[i]);
  return acc * h;
}

struct Coefficients {
  std::function<double(double)> b;
  std::function<double(double)> a;
  std::function<void(double, Vector&)> f;  // f(t, x) at the solve time
  int n = 1;
};

Coefficients coefficients(const InvariantDensity1D& pi, const FunctionalSpec& f, double t) {
  Coefficients c;
  c.b = [&pi](double x) { return pi.drift(x); };
  c.a = [&pi](double x) { return pi.diffusion_sq(x); };
  c.n = f.dim_out;
  if (f.scalar)
    c.f = [s = f.scalar, t](double x, Vector& out) { out[0] = s(t, x); };
  else
    c.f = [v = f.value, t](double x, Vector& out) { v(t, Vector::Constant(1, x), out); };
  return c;
}

struct Panel {
  double dphi = 0.0;  // Phi(r) - Phi(l)
  Vector left;        // int_l^r f/a e^{Phi(y) - Phi(r)} dy
  Vector right;       // int_l^r f/a e^{Phi(y) - Phi(l)} dy
};

Panel panel(const Coefficients& c, double l, double r) {
  const auto g = [&c](double y) { return 2.0 * c.b(y) / c.a(y); };
  Panel p;
  p.dphi = gauss_legendre(g, l, r);
  p.left = Vector::Zero(c.n);
  p.right = Vector::Zero(c.n);
  Vector fy(c.n);
  const double mid = 0.5 * (l + r);
  const double h = 0.5 * (r - l);
  for (std::size_t i = 0; i < kGLx.size(); ++i) {
    const double y = mid + h * kGLx[i];
    const double phi_l = gauss_legendre(g, l, y);  // Phi(y) - Phi(l)
    c.f(y, fy);
    const double w = kGLw[i] * h / c.a(y);
    p.right += fy * (w * std::exp(phi_l));
    p.left += fy * (w * std::exp(phi_l - p.dphi));
  }
  return p;
}

/// int over (lo, x) [toward_left] or (x, hi) of f/a e^{Phi(y) - Phi(x)} dy.
Vector tail_piece(const InvariantDensity1D& pi, const Coefficients& c, double x, bool toward_left,
                  const QuadratureConfig& quad) {
  Vector out(c.n);
  const double phi_x = pi.log_unnormalized(x);
  const double lo = toward_left ? pi.support().lo : x;
  const double hi = toward_left ? x : pi.support().hi;
  const TanMap map{x, 1.0};
  Vector fy(c.n);
  for (int l = 0; l < c.n; ++l) {
    const auto integrand = [&](double y) {
      if (!pi.support().contains(y)) return 0.0;
      const double e = pi.log_unnormalized(y) - phi_x;
      if (e < -745.0) return 0.0;
      c.f(y, fy);
      return fy[l] * std::exp(e) / c.a(y);
    };
    out[l] = integrate_mapped(integrand, lo, hi, map, quad).value;
  }
  return out;
}

struct Tables {
  std::vector<double> x;
  Matrix H;  // left scaled cumulative, N x n
  Matrix K;  // right scaled cumulative
};

Tables scaled_tables(const InvariantDensity1D& pi, const Coefficients& c,
                     const std::vector<double>& x, const QuadratureConfig& quad) {
  const std::size_t n = x.size();
  Tables t;
  t.x = x;
  t.H.resize(static_cast<Eigen::Index>(n), c.n);
  t.K.resize(static_cast<Eigen::Index>(n), c.n);
  std::vector<Panel> panels(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) panels[i] = panel(c, x[i], x[i + 1]);
  t.H.row(0) = tail_piece(pi, c, x.front(), true, quad).transpose();
  for (std::size_t i = 1; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    t.H.row(r) = t.H.row(r - 1) * std::exp(-panels[i - 1].dphi) + panels[i - 1].left.transpose();
  }
  t.K.row(static_cast<Eigen::Index>(n - 1)) = tail_piece(pi, c, x.back(), false, quad).transpose();
  for (std::size_t i = n - 1; i-- > 0;) {
    const auto r = static_cast<Eigen::Index>(i);
    t.K.row(r) = t.K.row(r + 1) * std::exp(panels[i].dphi) + panels[i].right.transpose();
  }
  return t;
}

double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
  const double h = x1 - x0;
  const double s = (x - x0) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * d1;
}

double slope(const std::vector<double>& lx, const std::vector<double>& ly) {
  const std::size_t n = lx.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return (sxx > 0 && syy > 0) ? sxy / std::sqrt(sxx * syy) : 0.0;
}

std::string number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

double PoissonSolution::uprime_at(double x, int component) const {
  if (dense_grid.empty() || x < dense_grid.front() || x > dense_grid.back())
    return direct_uprime(x, component);
  auto it = std::upper_bound(dense_grid.begin(), dense_grid.end(), x);
  std::size_t k = static_cast<std::size_t>(it - dense_grid.begin());
  if (k == dense_grid.size()) k = dense_grid.size() - 1;
  if (k == 0) k = 1;
  const auto i = static_cast<Eigen::Index>(k);
  return hermite(dense_grid[k - 1], dense_grid[k], dense_u_prime(i - 1, component),
                 dense_u_prime(i, component), dense_u_double_prime(i - 1, component),
                 dense_u_double_prime(i, component), x);
}

double PoissonSolution::u_at(double x, int component) const {
  if (dense_grid.empty() || x < dense_grid.front() || x > dense_grid.back())
    throw Error("poisson1d", "u requested outside the solved grid at x = " + number(x));
  auto it = std::upper_bound(dense_grid.begin(), dense_grid.end(), x);
  std::size_t k = static_cast<std::size_t>(it - dense_grid.begin());
  if (k == dense_grid.size()) k = dense_grid.size() - 1;
  if (k == 0) k = 1;
  const auto i = static_cast<Eigen::Index>(k);
  return hermite(dense_grid[k - 1], dense_grid[k], dense_u(i - 1, component), dense_u(i, component),
                 dense_u_prime(i - 1, component), dense_u_prime(i, component), x);
}

PoissonSolution solve_poisson_1d(const SdeModel& model, const InvariantDensity1D& pi,
                                 const FunctionalSpec& f, double t, const std::vector<double>& grid,
                                 const PoissonOptions& options) {
  if (model.dim_state != 1) throw Error("poisson1d", "requires a one-dimensional model");
  if (f.dim_state != 1) throw Error("poisson1d", "functional must act on a one-dimensional state");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw Error("poisson1d", "grid must be sorted");

  PoissonSolution sol;
  sol.time_parameter = t;
  const double log_b = pi.log_normalizer();
  for (double x : grid) {
    if (!pi.support().contains(x)) {
      sol.dropped.push_back(x);
      sol.warnings.push_back("grid point " + number(x) + " outside the support; dropped");
      continue;
    }
    if (pi.log_unnormalized(x) + log_b < kLogUnderflow) {
      sol.dropped.push_back(x);
      sol.warnings.push_back("a*pi below 1e-300 at x = " + number(x) + "; dropped");
      continue;
    }
    if (!sol.grid.empty() && x == sol.grid.back()) continue;
    sol.grid.push_back(x);
  }
  if (sol.grid.size() < 3) throw Error("poisson1d", "fewer than 3 grid points survive");

  sol.switch_point = pi.mode();
  sol.anchor = (pi.support().full_line()) ? 0.0 : pi.mode();
  if (sol.anchor < sol.grid.front() || sol.anchor > sol.grid.back()) {
    const double moved = sol.anchor < sol.grid.front() ? sol.grid.front() : sol.grid.back();
    sol.warnings.push_back("anchor " + number(sol.anchor) + " outside the grid; u normalized at " +
                           number(moved));
    sol.anchor = moved;
  }

  // Refinement of the requested grid, with the anchor and switch point as nodes.
  std::vector<double>& dense = sol.dense_grid;
  std::vector<std::size_t> requested_index;
  const double h = options.max_spacing;
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    if (i > 0) {
      const double l = sol.grid[i - 1];
      const double r = sol.grid[i];
      const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil((r - l) / h)));
      for (std::size_t j = 1; j < m; ++j) dense.push_back(l + (r - l) * static_cast<double>(j) / static_cast<double>(m));
    }
    requested_index.push_back(dense.size());
    dense.push_back(sol.grid[i]);
  }
  for (double extra : {sol.anchor, sol.switch_point}) {
    if (extra <= dense.front() || extra >= dense.back()) continue;
    auto it = std::lower_bound(dense.begin(), dense.end(), extra);
    if (*it == extra) continue;
    const auto pos = static_cast<std::size_t>(it - dense.begin());
    dense.insert(it, extra);
    for (auto& k : requested_index)
      if (k >= pos) ++k;
  }

  const Coefficients c = coefficients(pi, f, t);
  const Tables tab = scaled_tables(pi, c, dense, options.quad);
  const std::size_t nd = dense.size();
  const int n = c.n;
  sol.dense_u.resize(static_cast<Eigen::Index>(nd), n);
  sol.dense_u_prime.resize(static_cast<Eigen::Index>(nd), n);
  sol.dense_u_double_prime.resize(static_cast<Eigen::Index>(nd), n);
  Matrix fv(static_cast<Eigen::Index>(nd), n);
  Vector fx(n);
  for (std::size_t k = 0; k < nd; ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const double x = dense[k];
    c.f(x, fx);
    fv.row(r) = fx.transpose();
    const Vector up = x <= sol.switch_point ? Vector(-2.0 * tab.H.row(r).transpose())
                                            : Vector(2.0 * tab.K.row(r).transpose());
    sol.dense_u_prime.row(r) = up.transpose();
    sol.dense_u_double_prime.row(r) = (-2.0 * (fx + c.b(x) * up) / c.a(x)).transpose();
  }

  // u by the corrected trapezoid rule outward from the anchor.
  const auto anchor_k = static_cast<std::size_t>(
      std::lower_bound(dense.begin(), dense.end(), sol.anchor) - dense.begin());
  const auto seg = [&](std::size_t i) {  // int_{x_i}^{x_{i+1}} u'
    const auto r = static_cast<Eigen::Index>(i);
    const double hh = dense[i + 1] - dense[i];
    return Vector(hh * 0.5 * (sol.dense_u_prime.row(r) + sol.dense_u_prime.row(r + 1)).transpose() +
                  hh * hh / 12.0 *
                      (sol.dense_u_double_prime.row(r) - sol.dense_u_double_prime.row(r + 1)).transpose());
  };
  sol.dense_u.row(static_cast<Eigen::Index>(anchor_k)).setZero();
  for (std::size_t k = anchor_k + 1; k < nd; ++k)
    sol.dense_u.row(static_cast<Eigen::Index>(k)) =
        sol.dense_u.row(static_cast<Eigen::Index>(k - 1)) + seg(k - 1).transpose();
  for (std::size_t k = anchor_k; k-- > 0;)
    sol.dense_u.row(static_cast<Eigen::Index>(k)) =
        sol.dense_u.row(static_cast<Eigen::Index>(k + 1)) - seg(k).transpose();

  const auto ng = static_cast<Eigen::Index>(sol.grid.size());
  sol.u.resize(ng, n);
  sol.u_prime.resize(ng, n);
  sol.u_double_prime.resize(ng, n);
  sol.f_values.resize(ng, n);
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto k = static_cast<Eigen::Index>(requested_index[i]);
    sol.u.row(r) = sol.dense_u.row(k);
    sol.u_prime.row(r) = sol.dense_u_prime.row(k);
    sol.u_double_prime.row(r) = sol.dense_u_double_prime.row(k);
    sol.f_values.row(r) = fv.row(k);
  }

  auto density = std::make_shared<const InvariantDensity1D>(pi);
  sol.direct_uprime = [density, f, t, quad = options.quad, sw = sol.switch_point](double x,
                                                                                   int component) {
    const Coefficients cc = coefficients(*density, f, t);
    const bool left = x <= sw;
    const Vector v = tail_piece(*density, cc, x, left, quad);
    return left ? -2.0 * v[component] : 2.0 * v[component];
  };

  // Tail exponent of |b/a|.
  {
    std::vector<double> lx, ly;
    const std::size_t m = std::max<std::size_t>(2, sol.grid.size() / 4);
    const auto take = [&](std::size_t i) {
      const double x = sol.grid[i];
      const double r = std::abs(c.b(x) / c.a(x));
      if (std::abs(x) > 1.0 && r > 0.0) {
        lx.push_back(std::log(std::abs(x)));
        ly.push_back(std::log(r));
      }
    };
    double theta = -std::numeric_limits<double>::infinity();
    if (pi.support().upper_infinite()) {
      for (std::size_t i = sol.grid.size() - m; i < sol.grid.size(); ++i) take(i);
      if (lx.size() >= 2) theta = std::max(theta, slope(lx, ly));
    }
    lx.clear();
    ly.clear();
    if (pi.support().lower_infinite()) {
      for (std::size_t i = 0; i < m; ++i) take(i);
      if (lx.size() >= 2) theta = std::max(theta, slope(lx, ly));
    }
    if (std::isfinite(theta)) {
      sol.drift_ratio_exponent = theta;
      if (theta <= -1.0)
        sol.warnings.push_back("fitted drift ratio exponent theta = " + number(theta) +
                               " <= -1; explicit solution bounds may not apply");
    }
  }

  try {
    sol.fitted_exponents = fit_tail_exponents(sol, options.tail_fraction, pi.support());
  } catch (const Error&) {
    sol.fitted_exponents.reset();
  }
  return sol;
}

UPrimeRepresentations uprime_representations(const InvariantDensity1D& pi, const FunctionalSpec& f,
                                             double t, const std::vector<double>& points,
                                             int component, const PoissonOptions& options) {
  const Coefficients c = coefficients(pi, f, t);
  UPrimeRepresentations rep;
  rep.x = points;
  for (double x : points) {
    rep.left.push_back(-2.0 * tail_piece(pi, c, x, true, options.quad)[component]);
    rep.right.push_back(2.0 * tail_piece(pi, c, x, false, options.quad)[component]);
  }
  return rep;
}

TailExponents fit_tail_exponents(const PoissonSolution& sol, double tail_fraction,
                                 const Interval& support, int component) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 0.5))
    throw Error("poisson1d", "tail_fraction must lie in (0, 0.5]");
  const std::size_t n = sol.grid.size();
  const auto m = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
  std::vector<std::pair<std::size_t, std::size_t>> sides;  // [begin, end)
  if (support.lower_infinite()) sides.emplace_back(0, m);
  if (support.upper_infinite()) sides.emplace_back(n - m, n);
  if (sides.empty()) throw Error("poisson1d", "support has no infinite end to fit a tail on");
  if (m < 20) throw Error("poisson1d", "fewer than 20 tail points on each side");

  const auto fit = [&](const Matrix& values, bool& bounded) {
    double best = -std::numeric_limits<double>::infinity();
    bool any_above = false;
    for (auto [b, e] : sides) {
      std::vector<double> lx, ly;
      for (std::size_t i = b; i < e; ++i) {
        const double x = std::abs(sol.grid[i]);
        if (x <= 0.0) continue;
        const double v = std::abs(values(static_cast<Eigen::Index>(i), component));
        if (v >= kFloor) any_above = true;
        lx.push_back(std::log(x));
        ly.push_back(std::log(std::max(v, kFloor)));
      }
      const double s = slope(lx, ly);
      if (std::isfinite(s)) best = std::max(best, s);
    }
    bounded = !any_above;
    return bounded ? -std::numeric_limits<double>::infinity() : best;
  };

  TailExponents out;
  out.p1 = fit(sol.u, out.p1_bounded);
  out.p2 = fit(sol.u_prime, out.p2_bounded);
  out.p3 = fit(sol.u_double_prime, out.p3_bounded);

  // |u| ~ c ln|x| shows up as a small positive slope with u' ~ 1/x.
  if (!out.p1_bounded && out.p1 < 0.5 && !out.p2_bounded && std::abs(out.p2 + 1.0) < 0.25) {
    bool logarithmic = true;
    for (auto [b, e] : sides) {
      std::vector<double> lx, uy;
      for (std::size_t i = b; i < e; ++i) {
        const double x = std::abs(sol.grid[i]);
        if (x <= 1.0) continue;
        lx.push_back(std::log(x));
        uy.push_back(std::abs(sol.u(static_cast<Eigen::Index>(i), component)));
      }
      if (lx.size() < 3 || !(slope(lx, uy) > 0.0) || correlation(lx, uy) < 0.999) logarithmic = false;
    }
    if (logarithmic) {
      out.p1 = 0.0;
      out.p1_logarithmic = true;
    }
  }
  return out;
}

ExponentSet exponents_from_growth(double p0, double q0, double alpha, double alpha_bar) {
  ExponentSet e;
  e.p0 = p0;
  e.q0 = q0;
  e.p1 = std::max(0.0, p0 - alpha + 1.0);
  e.p2 = std::max(e.p1 + 2.0 * alpha_bar, p0);
  e.q1 = std::max(0.0, q0 - alpha + 1.0);
  e.q2 = std::max(e.q1 + 2.0 * alpha_bar, q0);
  e.p3 = std::max(p0 + 2.0 * alpha_bar, e.p1 + 4.0 * alpha_bar);
  return e;
}

ExponentSet exponents_from_fit(const TailExponents& fit, double p0, double q0,
                               bool time_homogeneous) {
  ExponentSet e;
  e.p0 = p0;
  e.q0 = time_homogeneous ? 0.0 : q0;
  e.p1 = fit.p1_bounded ? 0.0 : fit.p1;
  e.p2 = fit.p2_bounded ? 0.0 : fit.p2;
  e.p3 = fit.p3_bounded ? 0.0 : fit.p3;
  if (time_homogeneous) {
    e.q1 = 0.0;
    e.q2 = 0.0;
  } else {
    // Separable time dependence: time differences of u and u' inherit the
    // spatial growth of u and u'.
    e.q1 = std::max(e.p1, 0.0);
    e.q2 = std::max(e.p2, 0.0);
  }
  return e;
}

std::string ExponentAudit::failed_summary() const {
  std::string out;
  for (const auto& r : verdict_detail)
    if (!r.passed && !r.waived) out += (out.empty() ? "" : "; ") + r.name + " " + r.statement;
  return out;
}

ExponentAudit audit_mdp_exponents(double alpha, const ExponentSet& e, bool constant_diffusion,
                                  double slack) {
  ExponentAudit a;
  a.alpha = alpha;
  a.exponents = e;
  const auto add = [&](std::string name, std::string statement, bool ok, bool waived = false) {
    a.verdict_detail.push_back({std::move(name), std::move(statement), ok || waived, waived});
  };
  const double half = (1.0 + alpha) / 2.0;
  add("(i)", "p1 <= (1+alpha)/2: " + number(e.p1) + " vs " + number(half), e.p1 <= half + slack);
  if (alpha <= 1.0)
    add("(ii)", "p2 < alpha: " + number(e.p2) + " vs " + number(alpha), e.p2 < alpha + slack);
  else
    add("(ii)", "p2 <= (1+alpha)/2: " + number(e.p2) + " vs " + number(half), e.p2 <= half + slack);
  const double q = std::max(e.q0 / 2.0, e.q2);
  add("(iii)a", "max(q0/2, q2) <= alpha: " + number(q) + " vs " + number(alpha), q <= alpha + slack);
  const double q1_bound = alpha <= 1.0 ? 2.0 * alpha : alpha;
  add("(iii)b", "q1 <= 2 alpha 1{alpha<=1} + alpha 1{alpha>1}: " + number(e.q1) + " vs " +
                    number(q1_bound),
      e.q1 <= q1_bound + slack);
  add("(iv)", "p3 <= alpha: " + number(e.p3) + " vs " + number(alpha), e.p3 <= alpha + slack,
      constant_diffusion);
  a.verdict_mdp = std::all_of(a.verdict_detail.begin(), a.verdict_detail.end(),
                              [](const InequalityResult& r) { return r.passed; });
  return a;
}

void write_poisson_csv(std::ostream& out, const PoissonSolution& sol) {
  const int n = sol.components();
  out << "x";
  for (int l = 1; l <= n; ++l) out << ",u_" << l << ",u_prime_" << l << ",u_dprime_" << l;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::snprintf(buf, sizeof buf, "%.17g", sol.grid[i]);
    out << buf;
    for (int l = 0; l < n; ++l) {
      for (double v : {sol.u(r, l), sol.u_prime(r, l), sol.u_double_prime(r, l)}) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
    }
    out << "\n";
  }
}

}  // namespace ergosim
