#include "ergosim/model.hpp"

#include "ergosim/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ergosim {

namespace {

double param(const std::map<std::string, double>& params, const std::string& key,
             const std::string& family) {
  auto it = params.find(key);
  if (it == params.end()) throw Error("model", family + " requires parameter '" + key + "'");
  return it->second;
}

double param_or(const std::map<std::string, double>& params, const std::string& key,
                double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void require_positive(double v, const std::string& key, const std::string& family) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw Error("model", family + " parameter '" + key + "' must be positive");
}

std::string format_probe(const Vector& x) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

int Polynomial::degree() const {
  for (int i = static_cast<int>(coefficients.size()) - 1; i >= 0; --i)
    if (coefficients[static_cast<std::size_t>(i)] != 0.0) return i;
  return 0;
}

Vector SdeModel::drift_at(const Vector& x) const {
  Vector out(dim_state);
  drift(x, out);
  return out;
}

Matrix SdeModel::diffusion_at(const Vector& x) const {
  Matrix out(dim_state, dim_noise);
  diffusion(x, out);
  return out;
}

Matrix SdeModel::covariance_at(const Vector& x) const {
  const Matrix s = diffusion_at(x);
  return s * s.transpose();
}

double SdeModel::drift1(double x) const {
  if (scalar_drift) return scalar_drift(x);
  Vector v(1);
  v[0] = x;
  return drift_at(v)[0];
}

double SdeModel::diffusion1(double x) const {
  if (scalar_diffusion) return scalar_diffusion(x);
  Vector v(1);
  v[0] = x;
  return diffusion_at(v)(0, 0);
}

SdeModel make_scalar_model(std::string name, ScalarFn drift, ScalarFn diffusion) {
  SdeModel m;
  m.name = std::move(name);
  m.dim_state = 1;
  m.dim_noise = 1;
  m.scalar_drift = std::move(drift);
  m.scalar_diffusion = std::move(diffusion);
  m.drift = [b = m.scalar_drift](const Vector& x, Vector& out) { out[0] = b(x[0]); };
  m.diffusion = [s = m.scalar_diffusion](const Vector& x, Matrix& out) { out(0, 0) = s(x[0]); };
  m.initial_state = Vector::Zero(1);
  return m;
}

std::optional<ModelFamily> parse_model_family(const std::string& name) {
  std::string up;
  for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (up == "OU") return ModelFamily::OU;
  if (up == "CIR") return ModelFamily::CIR;
  if (up == "GOMPERTZ") return ModelFamily::GOMPERTZ;
  if (up == "POWER_DRIFT") return ModelFamily::POWER_DRIFT;
  return std::nullopt;
}

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::OU: return "OU";
    case ModelFamily::CIR: return "CIR";
    case ModelFamily::GOMPERTZ: return "GOMPERTZ";
    case ModelFamily::POWER_DRIFT: return "POWER_DRIFT";
  }
  return "?";
}

namespace {

SdeModel make_ou(double kappa, double mu, double sigma) {
  SdeModel m = make_scalar_model(
      "OU", [kappa, mu](double x) { return kappa * (mu - x); },
      [sigma](double) { return sigma; });
  m.recurrence_alpha = 1.0;
  // x kappa (mu - x) <= -(kappa/2) x^2 once |x| >= 2|mu|.
  m.recurrence_gamma = (mu == 0.0) ? kappa : 0.5 * kappa;
  m.recurrence_radius = 2.0 * std::abs(mu);
  m.lambda1 = m.lambda2 = sigma * sigma;
  m.holder_nu = 1.0;
  m.drift_growth_alpha_bar = 1.0;
  m.constant_diffusion = true;
  m.initial_state = Vector::Constant(1, mu);
  m.params = {{"kappa", kappa}, {"mu", mu}, {"sigma", sigma}};
  return m;
}

}  // namespace

SdeModel builtin_model(ModelFamily family, const std::map<std::string, double>& params) {
  const std::string fam = to_string(family);
  switch (family) {
    case ModelFamily::OU: {
      const double kappa = param(params, "kappa", fam);
      const double mu = param(params, "mu", fam);
      const double sigma = param(params, "sigma", fam);
      require_positive(kappa, "kappa", fam);
      require_positive(sigma, "sigma", fam);
      SdeModel m = make_ou(kappa, mu, sigma);
      m.initial_state[0] = param_or(params, "x0", mu);
      m.params["x0"] = m.initial_state[0];
      return m;
    }
    case ModelFamily::CIR: {
      const double kappa = param(params, "kappa", fam);
      const double mu = param(params, "mu", fam);
      const double sigma = param(params, "sigma", fam);
      require_positive(kappa, "kappa", fam);
      require_positive(mu, "mu", fam);
      require_positive(sigma, "sigma", fam);
      if (kappa * mu < 0.5 * sigma * sigma)
        throw Error("model", "Feller condition violated: kappa*mu = " + std::to_string(kappa * mu) +
                                 " < sigma^2/2 = " + std::to_string(0.5 * sigma * sigma));
      // Full truncation keeps the Euler scheme defined if it steps below 0.
      SdeModel m = make_scalar_model(
          "CIR", [kappa, mu](double x) { return kappa * (mu - x); },
          [sigma](double x) { return sigma * std::sqrt(std::max(x, 0.0)); });
      m.recurrence_alpha = 1.0;
      m.recurrence_gamma = 0.5 * kappa;
      m.recurrence_radius = 2.0 * mu;
      m.lambda1 = m.lambda2 = sigma * sigma;
      m.ellipticity_waived = true;
      m.holder_nu = 0.5;
      m.drift_growth_alpha_bar = 1.0;
      m.support = {0.0, INFINITY};
      m.initial_state = Vector::Constant(1, param_or(params, "x0", mu));
      m.params = {{"kappa", kappa}, {"mu", mu}, {"sigma", sigma}, {"x0", m.initial_state[0]}};
      return m;
    }
    case ModelFamily::GOMPERTZ: {
      const double kappa = param(params, "kappa", fam);
      const double mu = param(params, "mu", fam);
      const double sigma = param(params, "sigma", fam);
      require_positive(kappa, "kappa", fam);
      require_positive(sigma, "sigma", fam);
      const double log_mean = mu - sigma * sigma / (2.0 * kappa);
      SdeModel m = make_scalar_model(
          "GOMPERTZ", [kappa, mu](double x) { return kappa * (mu - std::log(x)) * x; },
          [sigma](double x) { return sigma * x; });
      auto chart = std::make_shared<SdeModel>(make_ou(kappa, log_mean, sigma));
      chart->name = "GOMPERTZ_LOG_CHART";
      m.chart_to = [](double x) { return std::log(x); };
      m.chart_from = [](double y) { return std::exp(y); };
      m.recurrence_alpha = chart->recurrence_alpha;
      m.recurrence_gamma = chart->recurrence_gamma;
      m.recurrence_radius = chart->recurrence_radius;
      m.lambda1 = chart->lambda1;
      m.lambda2 = chart->lambda2;
      m.holder_nu = 1.0;
      m.drift_growth_alpha_bar = 1.0;
      m.support = {0.0, INFINITY};
      m.initial_state = Vector::Constant(1, param_or(params, "x0", std::exp(log_mean)));
      if (!(m.initial_state[0] > 0.0)) throw Error("model", "GOMPERTZ requires x0 > 0");
      chart->initial_state[0] = std::log(m.initial_state[0]);
      m.chart_model = std::move(chart);
      m.params = {{"kappa", kappa}, {"mu", mu}, {"sigma", sigma}, {"x0", m.initial_state[0]}};
      return m;
    }
    case ModelFamily::POWER_DRIFT: {
      const double alpha = param(params, "alpha", fam);
      const double sigma = param_or(params, "sigma", 1.0);
      require_positive(alpha, "alpha", fam);
      require_positive(sigma, "sigma", fam);
      SdeModel m = make_scalar_model(
          "POWER_DRIFT",
          [alpha](double x) {
            const double mag = std::pow(std::abs(x), alpha);
            return x > 0.0 ? -mag : (x < 0.0 ? mag : 0.0);
          },
          [sigma](double) { return sigma; });
      m.recurrence_alpha = alpha;
      m.recurrence_gamma = 1.0;
      m.recurrence_radius = 0.0;
      m.lambda1 = m.lambda2 = sigma * sigma;
      m.holder_nu = std::min(1.0, alpha);
      m.drift_growth_alpha_bar = std::min(1.0, alpha);
      m.constant_diffusion = true;
      m.initial_state = Vector::Constant(1, param_or(params, "x0", 0.0));
      m.params = {{"alpha", alpha}, {"sigma", sigma}, {"x0", m.initial_state[0]}};
      return m;
    }
  }
  throw Error("model", "unknown family");
}

SdeModel polynomial_model(const Polynomial& drift, const Polynomial& diffusion) {
  SdeModel m = make_scalar_model("custom", drift, diffusion);
  const bool constant = diffusion.degree() == 0;
  m.constant_diffusion = constant;
  for (std::size_t i = 0; i < drift.coefficients.size(); ++i)
    m.params["drift_c" + std::to_string(i)] = drift.coefficients[i];
  for (std::size_t i = 0; i < diffusion.coefficients.size(); ++i)
    m.params["diffusion_c" + std::to_string(i)] = diffusion.coefficients[i];
  return m;
}

bool ConditionReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const ConditionCheck& ConditionReport::get(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw Error("model", "no condition named '" + name + "'");
}

std::vector<Vector> default_probe_grid(const SdeModel& model, int points_per_axis) {
  const double half_width = 5.0 * std::max(1.0, model.recurrence_radius);
  std::vector<Vector> probes;
  if (model.dim_state == 1 && !model.support.full_line()) {
    const double lo = model.support.lower_infinite() ? model.support.hi - 2.0 * half_width
                                                     : model.support.lo;
    const double step = 2.0 * half_width / points_per_axis;
    for (int k = 0; k < points_per_axis; ++k) {
      const double x = model.support.lower_infinite() ? lo + step * k : lo + step * (k + 1);
      probes.push_back(Vector::Constant(1, x));
    }
    return probes;
  }
  const int d = model.dim_state;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  const double step = 2.0 * half_width / (points_per_axis - 1);
  while (true) {
    Vector x(d);
    for (int i = 0; i < d; ++i) x[i] = -half_width + step * idx[static_cast<std::size_t>(i)];
    probes.push_back(x);
    int axis = 0;
    while (axis < d && ++idx[static_cast<std::size_t>(axis)] == points_per_axis) {
      idx[static_cast<std::size_t>(axis)] = 0;
      ++axis;
    }
    if (axis == d) break;
  }
  return probes;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> probe_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (n <= 2000) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
  }
  for (std::size_t stride : {1u, 2u, 3u, 5u, 8u, 13u, 21u, 34u, 55u, 89u})
    for (std::size_t i = 0; i + stride < n; ++i) pairs.emplace_back(i, i + stride);
  return pairs;
}

// A sampled bound "holds" when the largest ratio is within 10x of the median one.
void ratio_verdict(ConditionCheck& check, const std::vector<double>& ratios) {
  const double med = median(ratios);
  const double mx = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
  check.fitted_constant = mx;
  check.observed = med;
  check.worst_margin = 10.0 * med - mx;
  check.passed = std::isfinite(mx) && (mx == 0.0 || mx <= 10.0 * med);
}

ConditionReport validate_impl(const SdeModel& model, std::span<const Vector> probes) {
  if (probes.empty()) throw Error("model", "probe grid is empty");
  std::vector<Vector> drifts;
  std::vector<Matrix> sigmas;
  drifts.reserve(probes.size());
  sigmas.reserve(probes.size());
  for (const auto& x : probes) {
    Vector b = model.drift_at(x);
    Matrix s = model.diffusion_at(x);
    if (!b.allFinite())
      throw Error("model", "non-finite drift at probe " + format_probe(x));
    if (!s.allFinite())
      throw Error("model", "non-finite diffusion at probe " + format_probe(x));
    drifts.push_back(std::move(b));
    sigmas.push_back(std::move(s));
  }

  ConditionReport report;

  {
    ConditionCheck c;
    c.name = "recurrence";
    c.worst_margin = INFINITY;
    std::size_t tested = 0;
    std::size_t violated = 0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const double r = probes[i].norm();
      if (r <= model.recurrence_radius) continue;
      ++tested;
      const double bound = -model.recurrence_gamma * std::pow(r, 1.0 + model.recurrence_alpha);
      const double margin = bound - probes[i].dot(drifts[i]);
      if (margin < -1e-9 * (1.0 + std::abs(bound))) ++violated;
      if (margin < c.worst_margin) {
        c.worst_margin = margin;
        c.worst_probe = probes[i];
      }
    }
    c.passed = violated == 0;
    if (tested == 0) c.worst_margin = 0.0;
    c.detail = std::to_string(violated) + " of " + std::to_string(tested) +
               " probes beyond radius violate <x,b(x)> <= -gamma |x|^(1+alpha)";
    report.checks.push_back(std::move(c));
  }

  {
    ConditionCheck c;
    c.name = "ellipticity";
    c.worst_margin = INFINITY;
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const Matrix a = sigmas[i] * sigmas[i].transpose();
      Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
      const double emin = eig.eigenvalues().minCoeff();
      const double emax = eig.eigenvalues().maxCoeff();
      lo = std::min(lo, emin);
      hi = std::max(hi, emax);
      const double margin = std::min(emin - model.lambda1, model.lambda2 - emax);
      if (margin < c.worst_margin) {
        c.worst_margin = margin;
        c.worst_probe = probes[i];
      }
    }
    c.observed = lo;
    const double tol = 1e-12 * std::max(1.0, model.lambda2);
    c.passed = lo > 0.0 && c.worst_margin >= -tol;
    c.detail = "observed eigenvalues of a(x) in [" + std::to_string(lo) + ", " +
               std::to_string(hi) + "], declared [" + std::to_string(model.lambda1) + ", " +
               std::to_string(model.lambda2) + "]";
    if (model.ellipticity_waived) {
      c.waived = true;
      c.detail += "; waived: diffusion degenerates only on the boundary of the state space";
      c.passed = true;
    }
    report.checks.push_back(std::move(c));
  }

  {
    ConditionCheck c;
    c.name = "holder";
    const double nu = model.holder_nu;
    std::vector<double> drift_ratios;
    std::vector<double> diff_ratios;
    std::vector<std::pair<std::size_t, std::size_t>> where;
    for (auto [i, j] : probe_pairs(probes.size())) {
      const double dist = (probes[i] - probes[j]).norm();
      if (dist == 0.0) continue;
      const double denom = std::pow(dist, nu);
      drift_ratios.push_back((drifts[i] - drifts[j]).norm() / denom);
      diff_ratios.push_back((sigmas[i] - sigmas[j]).norm() / denom);
      where.emplace_back(i, j);
    }
    ConditionCheck cb;
    ratio_verdict(cb, drift_ratios);
    ConditionCheck cs;
    ratio_verdict(cs, diff_ratios);
    c.passed = cb.passed && cs.passed;
    c.fitted_constant = std::max(cb.fitted_constant, cs.fitted_constant);
    c.worst_margin = std::min(cb.worst_margin, cs.worst_margin);
    if (!where.empty()) {
      const auto& ratios = cb.worst_margin <= cs.worst_margin ? drift_ratios : diff_ratios;
      const auto k = static_cast<std::size_t>(
          std::max_element(ratios.begin(), ratios.end()) - ratios.begin());
      c.worst_probe = probes[where[k].first];
    }
    c.detail = "fitted L_b = " + std::to_string(cb.fitted_constant) +
               ", L_sigma = " + std::to_string(cs.fitted_constant) + " at nu = " + std::to_string(nu);
    report.checks.push_back(std::move(c));
  }

  {
    ConditionCheck c;
    c.name = "drift_growth";
    std::vector<double> ratios;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const double g = 1.0 + std::pow(probes[i].norm(), model.drift_growth_alpha_bar);
      const double bn = drifts[i].norm();
      ratios.push_back(bn / g);
      num += bn * g;
      den += g * g;
    }
    ratio_verdict(c, ratios);
    const auto k = static_cast<std::size_t>(
        std::max_element(ratios.begin(), ratios.end()) - ratios.begin());
    c.worst_probe = probes[k];
    c.fitted_constant = num / den;  // least-squares B in |b| ~ B (1 + |x|^abar)
    c.detail = "least-squares constant " + std::to_string(c.fitted_constant) +
               ", max ratio " + std::to_string(ratios[k]) + " vs median " + std::to_string(c.observed);
    report.checks.push_back(std::move(c));
  }
  return report;
}

}  // namespace

ConditionReport validate_conditions(const SdeModel& model, std::span<const Vector> probes) {
  if (!model.chart_model) return validate_impl(model, probes);
  std::vector<Vector> mapped;
  mapped.reserve(probes.size());
  for (const auto& x : probes) mapped.push_back(Vector::Constant(1, model.chart_to(x[0])));
  ConditionReport r = validate_impl(*model.chart_model, mapped);
  r.validated_in_chart = true;
  return r;
}

}  // namespace ergosim
