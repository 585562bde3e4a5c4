#include "ergosim/variance.hpp"

#include "ergosim/error.hpp"
#include "ergosim/rng.hpp"
#include "ergosim/stats.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ergosim {

namespace {

constexpr double kDegenerate = 1e-10;

constexpr std::array<double, 10> kGLx = {
    -0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472,
    -0.1488743389816312, 0.1488743389816312,  0.4333953941292472,  0.6794095682990244,
    0.8650633666889845,  0.9739065285171717};
constexpr std::array<double, 10> kGLw = {
    0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963,
    0.2955242247147529, 0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
    0.1494513491505806, 0.0666713443086881};

std::string number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void require_nondegenerate(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > kDegenerate))
    throw Error("variance", "degenerate covariance; rate undefined");
}

// log(L)/(L - 1), the integral of 1/(1 + s (L - 1)) over [0, 1]
double log_ratio_mean(double lambda) {
  const double x = lambda - 1.0;
  if (x == 0.0) return 1.0;
  return std::log1p(x) / x;
}

}  // namespace

std::string to_string(CovarianceRoute route) {
  return route == CovarianceRoute::GRADIENT_FORM ? "GRADIENT_FORM" : "AUTOCORRELATION_FORM";
}

Matrix CovarianceCurve::at(double t) const {
  if (matrices.empty()) throw Error("variance", "empty covariance curve");
  if (matrices.size() == 1 || t <= times.front()) return matrices.front();
  if (t >= times.back()) return matrices.back();
  const auto k = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
  const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
  return (1.0 - w) * matrices[k - 1] + w * matrices[k];
}

CovarianceCurve mf_gradient_form(const std::vector<PoissonSolution>& solutions,
                                 const SdeModel& model, const InvariantDensity1D& pi,
                                 const std::vector<double>& times,
                                 const GradientFormOptions& options) {
  if (model.dim_state != 1) throw Error("variance", "gradient form requires a one-dimensional model");
  if (solutions.size() != times.size() || times.empty())
    throw Error("variance", "need one Poisson solution per requested time");
  CovarianceCurve curve;
  curve.route = CovarianceRoute::GRADIENT_FORM;
  curve.times = times;

  for (const auto& sol : solutions) {
    const int n = sol.components();
    const auto& x = sol.dense_grid;
    const std::size_t nd = x.size();
    std::vector<double> w(nd);  // a * pi
    for (std::size_t k = 0; k < nd; ++k) w[k] = pi.diffusion_sq(x[k]) * pi.density(x[k]);

    Matrix bulk = Matrix::Zero(n, n);
    Vector um(n);
    for (std::size_t k = 0; k + 1 < nd; ++k) {
      const double h = x[k + 1] - x[k];
      const double mid = 0.5 * (x[k] + x[k + 1]);
      for (int l = 0; l < n; ++l) um[l] = sol.uprime_at(mid, l);
      const double wm = pi.diffusion_sq(mid) * pi.density(mid);
      const Vector u0 = sol.dense_u_prime.row(static_cast<Eigen::Index>(k)).transpose();
      const Vector u1 = sol.dense_u_prime.row(static_cast<Eigen::Index>(k + 1)).transpose();
      bulk += h / 6.0 * (w[k] * u0 * u0.transpose() + 4.0 * wm * um * um.transpose() +
                         w[k + 1] * u1 * u1.transpose());
    }

    // Power-law envelope of u' beyond each end of the grid.
    Matrix tail = Matrix::Zero(n, n);
    const auto add_tail = [&](bool right) {
      const double end = right ? x.back() : x.front();
      const double limit = right ? pi.support().hi : pi.support().lo;
      if (end == limit) return;
      const Vector u_end = sol.dense_u_prime.row(static_cast<Eigen::Index>(right ? nd - 1 : 0)).transpose();
      Vector p = Vector::Zero(n);
      if (std::abs(end) > 1.0) {
        const std::size_t m = std::max<std::size_t>(5, nd / 10);
        for (int l = 0; l < n; ++l) {
          std::vector<double> lx, ly;
          bool ok = true;
          for (std::size_t j = 0; j < m && j < nd; ++j) {
            const std::size_t k = right ? nd - 1 - j : j;
            const double v = std::abs(sol.dense_u_prime(static_cast<Eigen::Index>(k), l));
            if (!(v > 1e-12) || std::abs(x[k]) <= 1.0) {
              ok = false;
              break;
            }
            lx.push_back(std::abs(x[k]));
            ly.push_back(v);
          }
          if (ok && lx.size() >= 2) p[l] = loglog_slope(lx, ly);
        }
      }
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
          const double c = u_end[i] * u_end[j];
          if (c == 0.0) continue;
          const double q = p[i] + p[j];
          const auto integrand = [&](double y) {
            const double dens = pi.density(y);
            if (dens == 0.0) return 0.0;
            const double env = std::abs(end) > 1.0 ? std::pow(std::abs(y) / std::abs(end), q) : 1.0;
            return env * pi.diffusion_sq(y) * dens;
          };
          const double lo = right ? end : limit;
          const double hi = right ? limit : end;
          const double v = c * integrate_mapped(integrand, lo, hi, TanMap{end, 1.0}, options.quad).value;
          tail(i, j) += v;
          if (i != j) tail(j, i) += v;
        }
      }
    };
    add_tail(false);
    add_tail(true);

    const double bulk_size = bulk.diagonal().cwiseAbs().maxCoeff();
    const double tail_size = tail.cwiseAbs().maxCoeff();
    if (!(tail_size <= options.max_tail_fraction * bulk_size) && tail_size > 0.0)
      throw Error("variance", "grid too narrow for requested tolerance (tail " + number(tail_size) +
                                  " vs bulk " + number(bulk_size) + ")");
    Matrix m = bulk + tail;
    m = 0.5 * (m + m.transpose()).eval();
    curve.matrices.push_back(m);
  }
  return curve;
}

namespace {

struct TailEstimate {
  double remainder = 0.0;
  double ratio = 0.0;
};

/// g sampled at lags 0..K with spacing h.
TailEstimate fit_tail(const std::vector<double>& g, double h) {
  TailEstimate est;
  const std::size_t K = g.size() - 1;
  if (g[0] == 0.0) return est;
  const std::size_t first = (3 * K) / 4;
  const double S = static_cast<double>(K) * h;
  bool same_sign = true;
  const double sign = g[K] >= 0 ? 1.0 : -1.0;
  std::vector<double> s, lg;
  double tail_mean = 0.0;
  for (std::size_t k = first; k <= K; ++k) {
    tail_mean += g[k];
    if (!(g[k] * sign > 0)) same_sign = false;
    else {
      s.push_back(static_cast<double>(k) * h);
      lg.push_back(std::log(std::abs(g[k])));
    }
  }
  tail_mean /= static_cast<double>(K - first + 1);
  if (same_sign && s.size() >= 3) {
    double ms = 0, ml = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      ms += s[i];
      ml += lg[i];
    }
    ms /= static_cast<double>(s.size());
    ml /= static_cast<double>(s.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      sxy += (s[i] - ms) * (lg[i] - ml);
      sxx += (s[i] - ms) * (s[i] - ms);
      syy += (lg[i] - ml) * (lg[i] - ml);
    }
    const double lambda = -sxy / sxx;
    const double r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 0.0;
    // Accept only a clean decay of at least one e-fold across the window.
    if (lambda * (S - static_cast<double>(first) * h) >= 1.0 && r2 >= 0.9) {
      const double at_s = sign * std::exp(ml - lambda * (S - ms));
      est.remainder = at_s / lambda;
      est.ratio = std::abs(at_s) / std::abs(g[0]);
      return est;
    }
  }
  est.ratio = std::abs(tail_mean) / std::abs(g[0]);
  return est;
}

struct LagSums {
  std::size_t paths = 0;
  std::vector<double> c;  // (K + 1) * n * n, c[k][i][j] = sum f_i(X_0) f_j(X_k)
};

}  // namespace

CovarianceCurve mf_autocorrelation_form(const SdeModel& model, const InvariantDensity1D* pi,
                                        const FunctionalSpec& f, double t,
                                        std::uint64_t master_seed,
                                        const AutocorrelationOptions& options) {
  if (!(options.horizon_s > 0.0) || !(options.fine_step > 0.0))
    throw Error("variance", "horizon and step must be positive");
  if (options.blocks < 2 || options.n_paths < options.blocks)
    throw Error("variance", "need at least as many paths as jackknife blocks");
  const auto K = static_cast<std::size_t>(grid_steps(options.horizon_s, options.fine_step));
  const int n = f.dim_out;
  const std::size_t nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  const double h = options.fine_step;
  const double sqh = std::sqrt(h);
  const SdeModel& sim = model.chart_model ? *model.chart_model : model;
  const bool burn_in = pi == nullptr;
  const auto burn_steps = static_cast<std::size_t>(burn_in ? 10 * K : 0);
  const bool scalar = sim.is_scalar() && model.dim_state == 1 && f.is_scalar();

  std::vector<LagSums> blocks(options.blocks);
  parallel_for(options.blocks, options.threads, [&](std::size_t b) {
    const std::size_t p_lo = b * options.n_paths / options.blocks;
    const std::size_t p_hi = (b + 1) * options.n_paths / options.blocks;
    LagSums& out = blocks[b];
    out.paths = p_hi - p_lo;
    out.c.assign((K + 1) * nn, 0.0);
    if (scalar) {
      const auto& fs = f.scalar;
      for (std::size_t p = p_lo; p < p_hi; ++p) {
        RngStream rng(master_seed, derive_stream_id(stream_purpose::autocorrelation, p));
        double z;
        if (burn_in) {
          z = model.chart_model ? model.chart_to(model.initial_state[0]) : model.initial_state[0];
        } else {
          const double x0 = pi->quantile(rng.uniform());
          z = model.chart_model ? model.chart_to(x0) : x0;
        }
        const auto advance = [&](std::size_t step) {
          z = z + sim.scalar_drift(z) * h + sim.scalar_diffusion(z) * sqh * rng.normal();
          if (!(std::abs(z) <= 1e8)) throw TrajectoryExploded(step, std::abs(z));
        };
        for (std::size_t k = 0; k < burn_steps; ++k) advance(k + 1);
        const auto fx = [&] { return fs(t, model.chart_model ? model.chart_from(z) : z); };
        const double f0 = fx();
        if (f0 == 0.0) continue;
        out.c[0] += f0 * f0;
        for (std::size_t k = 1; k <= K; ++k) {
          advance(k);
          out.c[k] += f0 * fx();
        }
      }
    } else {
      const int d = sim.dim_state;
      const int m = sim.dim_noise;
      Vector bz(d), noise(m), f0(n), fk(n);
      Matrix s(d, m);
      for (std::size_t p = p_lo; p < p_hi; ++p) {
        RngStream rng(master_seed, derive_stream_id(stream_purpose::autocorrelation, p));
        Vector z(d);
        if (burn_in) {
          z = model.initial_state;
        } else {
          z = Vector::Constant(1, pi->quantile(rng.uniform()));
        }
        if (model.chart_model) z = z.unaryExpr([&](double v) { return model.chart_to(v); }).eval();
        const auto advance = [&](std::size_t step) {
          sim.drift(z, bz);
          sim.diffusion(z, s);
          for (int j = 0; j < m; ++j) noise[j] = rng.normal();
          z += bz * h + s * noise * sqh;
          if (!(z.norm() <= 1e8)) throw TrajectoryExploded(step, z.norm());
        };
        const auto eval = [&](Vector& out_f) {
          const Vector x = model.chart_model
                               ? z.unaryExpr([&](double v) { return model.chart_from(v); }).eval()
                               : z;
          f.value(t, x, out_f);
        };
        for (std::size_t k = 0; k < burn_steps; ++k) advance(k + 1);
        eval(f0);
        for (std::size_t k = 0; k <= K; ++k) {
          if (k > 0) advance(k);
          eval(fk);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out.c[k * nn + static_cast<std::size_t>(i * n + j)] += f0[i] * fk[j];
        }
      }
    }
  });

  // M from lag sums, paths counted in `count`.
  const auto estimate = [&](const std::vector<double>& sums, double count, double* worst_ratio) {
    Matrix mf(n, n);
    std::vector<double> g(K + 1);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        for (std::size_t k = 0; k <= K; ++k)
          g[k] = (sums[k * nn + static_cast<std::size_t>(i * n + j)] +
                  sums[k * nn + static_cast<std::size_t>(j * n + i)]) /
                 count;
        double integral = 0.5 * (g[0] + g[K]);
        for (std::size_t k = 1; k < K; ++k) integral += g[k];
        integral *= h;
        const TailEstimate tail = fit_tail(g, h);
        if (worst_ratio) *worst_ratio = std::max(*worst_ratio, tail.ratio);
        mf(i, j) = mf(j, i) = integral + tail.remainder;
      }
    }
    return mf;
  };

  std::vector<double> total((K + 1) * nn, 0.0);
  std::size_t total_paths = 0;
  for (const auto& b : blocks) {
    total_paths += b.paths;
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += b.c[k];
  }
  double ratio = 0.0;
  const Matrix mf = estimate(total, static_cast<double>(total_paths), &ratio);
  if (!(ratio < options.max_tail_ratio))
    throw Error("variance", "horizon S too short: tail ratio " + number(ratio));

  const auto B = static_cast<double>(blocks.size());
  std::vector<Matrix> loo;
  Matrix loo_mean = Matrix::Zero(n, n);
  std::vector<double> part(total.size());
  for (const auto& b : blocks) {
    for (std::size_t k = 0; k < total.size(); ++k) part[k] = total[k] - b.c[k];
    loo.push_back(estimate(part, static_cast<double>(total_paths - b.paths), nullptr));
    loo_mean += loo.back();
  }
  loo_mean /= B;
  Matrix var = Matrix::Zero(n, n);
  for (const auto& m : loo) var += (m - loo_mean).cwiseAbs2();
  const Matrix se = (var * ((B - 1.0) / B)).cwiseSqrt();

  CovarianceCurve curve;
  curve.route = CovarianceRoute::AUTOCORRELATION_FORM;
  curve.times = {t};
  curve.matrices = {mf};
  curve.standard_errors = {se};
  curve.tail_ratio = ratio;
  curve.lower_confidence = burn_in;
  return curve;
}

RatePath RatePath::make(std::vector<double> times, std::vector<Vector> values) {
  if (times.empty() || times.size() != values.size())
    throw Error("variance", "rate path needs matching, nonempty knot lists");
  if (times.front() != 0.0) throw Error("variance", "rate path must start at t = 0");
  if (!values.front().isZero(0.0)) throw Error("variance", "rate path must start at xi(0) = 0");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw Error("variance", "rate path knot times must increase strictly");
    if (values[k].size() != values[0].size()) throw Error("variance", "rate path knots differ in dimension");
  }
  RatePath p;
  p.times_ = std::move(times);
  p.values_ = std::move(values);
  return p;
}

RatePath RatePath::linear(const Vector& slope, double horizon) {
  return make({0.0, horizon}, {Vector::Zero(slope.size()), slope * horizon});
}

Vector RatePath::slope_at(double t) const {
  if (times_.size() < 2 || t < 0.0 || t >= times_.back()) return Vector::Zero(values_.front().size());
  const auto k = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
  return (values_[k] - values_[k - 1]) / (times_[k] - times_[k - 1]);
}

Vector RatePath::value_at(double t) const {
  if (t <= 0.0) return values_.front();
  if (t >= times_.back()) return values_.back();
  const auto k = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), t) - times_.begin());
  const double w = (t - times_[k - 1]) / (times_[k] - times_[k - 1]);
  return (1.0 - w) * values_[k - 1] + w * values_[k];
}

namespace {

std::vector<double> breakpoints_of(const RatePath& path, const CovarianceCurve& curve) {
  std::vector<double> s = path.times();
  for (double t : curve.times)
    if (t > 0.0 && t < path.horizon()) s.push_back(t);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

}  // namespace

double rate_function(const RatePath& path, const CovarianceCurve& curve) {
  if (curve.dim() != path.dim()) throw Error("variance", "path and covariance dimensions differ");
  const auto s = breakpoints_of(path, curve);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const double s0 = s[k];
    const double s1 = s[k + 1];
    const Vector v = path.slope_at(s0);
    const Matrix m0 = curve.at(s0);
    const Matrix m1 = curve.at(s1);
    require_nondegenerate(m0);
    require_nondegenerate(m1);
    // M(l) = L Q (I + l (D - I)) Q^T L^T with L L^T = M0 and L^-1 M1 L^-T = Q D Q^T.
    const Eigen::LLT<Matrix> llt(m0);
    const Matrix L = llt.matrixL();
    const Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(m0.rows(), m0.cols()));
    const Matrix A = Linv * m1 * Linv.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()));
    const Vector w = es.eigenvectors().transpose() * (Linv * v);
    double seg = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) seg += w[i] * w[i] * log_ratio_mean(es.eigenvalues()[i]);
    total += (s1 - s0) * seg;
  }
  return 0.5 * total;
}

OptimalControl::OptimalControl(RatePath path, std::vector<PoissonSolution> solutions,
                               CovarianceCurve curve, SdeModel model)
    : path_(std::move(path)),
      solutions_(std::move(solutions)),
      curve_(std::move(curve)),
      model_(std::move(model)) {
  if (solutions_.empty()) throw Error("variance", "optimal control needs a Poisson solution");
  if (solutions_.size() > 1 && solutions_.size() != curve_.times.size())
    throw Error("variance", "need one Poisson solution per covariance time");
  if (curve_.dim() != path_.dim()) throw Error("variance", "path and covariance dimensions differ");
  for (double t : curve_.times) require_nondegenerate(curve_.at(t));
}

double OptimalControl::uprime(double x, double s, int component) const {
  if (solutions_.size() == 1 || s <= curve_.times.front())
    return solutions_.front().uprime_at(x, component);
  if (s >= curve_.times.back()) return solutions_.back().uprime_at(x, component);
  const auto k = static_cast<std::size_t>(
      std::upper_bound(curve_.times.begin(), curve_.times.end(), s) - curve_.times.begin());
  const double w = (s - curve_.times[k - 1]) / (curve_.times[k] - curve_.times[k - 1]);
  return (1.0 - w) * solutions_[k - 1].uprime_at(x, component) +
         w * solutions_[k].uprime_at(x, component);
}

double OptimalControl::operator()(double x, double s) const {
  const Vector v = path_.slope_at(s);
  if (v.isZero(0.0)) return 0.0;
  const Vector c = curve_.at(s).llt().solve(v);
  double h = 0.0;
  for (Eigen::Index l = 0; l < c.size(); ++l) h += uprime(x, s, static_cast<int>(l)) * c[l];
  return model_.diffusion1(x) * h;
}

std::vector<double> OptimalControl::breakpoints() const { return breakpoints_of(path_, curve_); }

ControlFunction OptimalControl::frozen_at(double x, double l2_bound) const {
  return ControlFunction::make(
      [this, x](double s) { return Vector::Constant(1, (*this)(x, s)).eval(); }, 1, l2_bound,
      path_.horizon());
}

OptimalControl optimal_control(const RatePath& path, const std::vector<PoissonSolution>& solutions,
                               const CovarianceCurve& curve, const SdeModel& model) {
  return OptimalControl(path, solutions, curve, model);
}

double control_cost(const OptimalControl& phi, const InvariantDensity1D& pi,
                    const QuadratureConfig& quad) {
  const auto s = phi.breakpoints();
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const double c = 0.5 * (s[k] + s[k + 1]);
    const double h = 0.5 * (s[k + 1] - s[k]);
    for (std::size_t i = 0; i < kGLx.size(); ++i) {
      const double si = c + h * kGLx[i];
      const auto sq = [&](double x) {
        const double p = phi(x, si);
        return p * p;
      };
      total += kGLw[i] * h * pi.expectation(sq, quad).value;
    }
  }
  return total;
}

void write_covariance_json(std::ostream& out, const CovarianceCurve& curve) {
  const auto to_rows = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["times"] = curve.times;
  j["matrices"] = nlohmann::json::array();
  for (const auto& m : curve.matrices) j["matrices"].push_back(to_rows(m));
  j["route"] = to_string(curve.route);
  j["stderr"] = nlohmann::json::array();
  for (const auto& m : curve.standard_errors) j["stderr"].push_back(to_rows(m));
  if (curve.route == CovarianceRoute::AUTOCORRELATION_FORM) {
    j["tail_ratio"] = curve.tail_ratio;
    j["lower_confidence"] = curve.lower_confidence;
  }
  out << j.dump(2) << "\n";
}

}  // namespace ergosim
