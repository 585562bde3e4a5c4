#include "ergosim/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace ergosim {

namespace {

struct Panel {
  double a, b;
  double fa, fm, fb;
  double whole;
  double tol;
  int depth;
};

constexpr int kInitialPanels = 8;
constexpr int kMaxDepth = 60;

}  // namespace

QuadratureResult adaptive_simpson(const std::function<double(double)>& fn,
                                  double a, double b,
                                  const QuadratureConfig& cfg) {
  QuadratureResult res;
  if (a == b) return res;
  double sign = 1.0;
  if (b < a) {
    std::swap(a, b);
    sign = -1.0;
  }

  std::vector<Panel> stack;
  stack.reserve(128);
  const double width = (b - a) / kInitialPanels;
  const double panel_tol = cfg.abs_tolerance / kInitialPanels;
  double left = fn(a);
  res.evaluations = 1;
  // Panels are built left to right and pushed in reverse so they pop in order.
  std::vector<Panel> initial;
  initial.reserve(kInitialPanels);
  for (int i = 0; i < kInitialPanels; ++i) {
    const double pa = a + i * width;
    const double pb = (i + 1 == kInitialPanels) ? b : a + (i + 1) * width;
    const double pm = 0.5 * (pa + pb);
    const double fm = fn(pm);
    const double fb = fn(pb);
    res.evaluations += 2;
    initial.push_back({pa, pb, left, fm, fb, (pb - pa) / 6.0 * (left + 4.0 * fm + fb),
                       panel_tol, 0});
    left = fb;
  }
  for (auto it = initial.rbegin(); it != initial.rend(); ++it) stack.push_back(*it);

  std::size_t subdivisions = 0;
  double total = 0.0;
  double err = 0.0;
  while (!stack.empty()) {
    Panel p = stack.back();
    stack.pop_back();
    const double m = 0.5 * (p.a + p.b);
    const double lm = 0.5 * (p.a + m);
    const double rm = 0.5 * (m + p.b);
    const double flm = fn(lm);
    const double frm = fn(rm);
    res.evaluations += 2;
    const double h = p.b - p.a;
    const double sl = h / 12.0 * (p.fa + 4.0 * flm + p.fm);
    const double sr = h / 12.0 * (p.fm + 4.0 * frm + p.fb);
    const double diff = sl + sr - p.whole;
    const bool give_up = subdivisions >= cfg.max_subdivisions || p.depth >= kMaxDepth;
    if (std::abs(diff) <= 15.0 * p.tol || !std::isfinite(diff) || give_up) {
      if (give_up && std::abs(diff) > 15.0 * p.tol) res.converged = false;
      total += sl + sr + diff / 15.0;
      err += std::abs(diff) / 15.0;
      continue;
    }
    ++subdivisions;
    stack.push_back({m, p.b, p.fm, frm, p.fb, sr, 0.5 * p.tol, p.depth + 1});
    stack.push_back({p.a, m, p.fa, flm, p.fm, sl, 0.5 * p.tol, p.depth + 1});
  }
  res.value = sign * total;
  res.error_estimate = err;
  if (!std::isfinite(res.value)) res.converged = false;
  return res;
}

double TanMap::to_x(double u) const { return anchor + scale * std::tan(u); }

double TanMap::to_u(double x) const {
  if (x == INFINITY) return std::numbers::pi / 2;
  if (x == -INFINITY) return -std::numbers::pi / 2;
  return std::atan((x - anchor) / scale);
}

double TanMap::jacobian(double u) const {
  const double c = std::cos(u);
  return scale / (c * c);
}

QuadratureResult integrate_mapped(const std::function<double(double)>& fn,
                                  double lo, double hi, const TanMap& map,
                                  const QuadratureConfig& cfg) {
  const double ulo = map.to_u(lo) + (std::isinf(lo) ? cfg.endpoint_margin : cfg.finite_margin);
  const double uhi = map.to_u(hi) - (std::isinf(hi) ? cfg.endpoint_margin : cfg.finite_margin);
  if (!(ulo < uhi)) return {};
  return adaptive_simpson(
      [&](double u) {
        const double v = fn(map.to_x(u));
        if (v == 0.0) return 0.0;
        return v * map.jacobian(u);
      },
      ulo, uhi, cfg);
}

}  // namespace ergosim
