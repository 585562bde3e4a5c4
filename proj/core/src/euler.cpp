#include "ergosim/euler.hpp"

#include "ergosim/error.hpp"
#include "ergosim/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ergosim {

std::optional<Regime> parse_regime(const std::string& name) {
  if (name == "LLN") return Regime::LLN;
  if (name == "CLT") return Regime::CLT;
  if (name == "MDP") return Regime::MDP;
  return std::nullopt;
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::LLN: return "LLN";
    case Regime::CLT: return "CLT";
    case Regime::MDP: return "MDP";
  }
  return "?";
}

namespace {

std::string number(double v) {
  char buf[64];
  if (std::abs(v - std::round(v)) < 1e-12 && std::abs(v) < 1e15)
    std::snprintf(buf, sizeof buf, "%.1f", v);
  else
    std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::optional<std::string> schedule_violation(Regime regime, const SchedulePolicy& policy,
                                              double holder_nu) {
  if (!(policy.c_step > 0.0) || !std::isfinite(policy.c_step))
    return "c_step must be positive, got " + number(policy.c_step);
  if (!std::isfinite(policy.theta_step)) return "theta must be finite";
  if (regime == Regime::LLN) {
    if (!(policy.theta_step > 1.0))
      return "LLN requires theta > 1, got " + number(policy.theta_step);
    return std::nullopt;
  }
  if (!(holder_nu > 0.0))
    return to_string(regime) + " requires nu > 0, got " + number(holder_nu);
  const double bound = 1.0 + 1.0 / holder_nu;
  if (!(policy.theta_step > bound))
    return to_string(regime) + " requires theta > 1 + 1/nu = " + number(bound) + ", got " +
           number(policy.theta_step);
  if (regime == Regime::MDP && !(policy.gamma_mdp > 0.0 && policy.gamma_mdp < 0.5))
    return "MDP requires 0 < gamma_delta < 1/2, got " + number(policy.gamma_mdp);
  return std::nullopt;
}

StepSchedule StepSchedule::make(Regime regime, const SchedulePolicy& policy, double epsilon,
                                double holder_nu) {
  if (auto why = schedule_violation(regime, policy, holder_nu)) throw Error("euler", *why);
  return make_unchecked(regime, policy, epsilon);
}

StepSchedule StepSchedule::make_unchecked(Regime regime, const SchedulePolicy& policy,
                                          double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw Error("euler", "epsilon must be positive, got " + number(epsilon));
  StepSchedule s;
  s.epsilon = epsilon;
  s.regime = regime;
  s.policy = policy;
  s.delta_step = policy.c_step * std::pow(epsilon, policy.theta_step);
  s.mdp_scale = regime == Regime::MDP ? std::pow(epsilon, policy.gamma_mdp) : 1.0;
  if (!(s.delta_step > 0.0)) throw Error("euler", "step width underflows for epsilon " + number(epsilon));
  return s;
}

ControlFunction ControlFunction::make(std::function<Vector(double)> psi, int dim_noise,
                                      double l2_bound, double horizon) {
  ControlFunction c;
  c.dim_noise_ = dim_noise;
  c.l2_bound_ = l2_bound;
  QuadratureConfig quad;
  quad.abs_tolerance = 1e-12;
  c.l2_norm_sq_ =
      adaptive_simpson([&](double t) { return psi(t).squaredNorm(); }, 0.0, horizon, quad).value;
  if (!(c.l2_norm_sq_ <= l2_bound + 1e-9))
    throw Error("euler", "control exceeds L2 bound: " + number(c.l2_norm_sq_) + " > " +
                             number(l2_bound));
  c.psi_ = std::move(psi);
  return c;
}

ControlFunction ControlFunction::zero(int dim_noise, double horizon) {
  ControlFunction c =
      make([dim_noise](double) { return Vector::Zero(dim_noise).eval(); }, dim_noise, 0.0, horizon);
  c.zero_ = true;
  return c;
}

ControlFunction ControlFunction::constant(const Vector& value, double l2_bound, double horizon) {
  return make([value](double) { return value; }, static_cast<int>(value.size()), l2_bound,
              horizon);
}

PathObserver csv_snapshot_sink(std::ostream& out, int dim_state, int dim_out, std::int64_t stride) {
  out << "t";
  for (int i = 1; i <= dim_state; ++i) out << ",z_" << i;
  for (int i = 1; i <= dim_out; ++i) out << ",xi_" << i;
  out << "\n";
  stride = std::max<std::int64_t>(1, stride);
  return [&out, stride](std::int64_t k, double t, const Vector& z, const FunctionalAccumulator& acc) {
    if (k % stride != 0) return;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", t);
    out << buf;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", z[i]);
      out << ',' << buf;
    }
    for (Eigen::Index i = 0; i < acc.xi_continuous.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", acc.xi_continuous[i]);
      out << ',' << buf;
    }
    out << "\n";
  };
}

double grid_floor(double t, double delta) {
  const double r = t / delta;
  const double k = std::round(r);
  if (std::abs(r - k) <= 1e-9 * std::max(1.0, std::abs(r))) return t;
  return std::floor(r) * delta;
}

std::int64_t grid_steps(double horizon, double delta) {
  const double r = horizon / delta;
  const double k = std::round(r);
  if (std::abs(r - k) <= 1e-9 * std::max(1.0, std::abs(r))) return static_cast<std::int64_t>(k);
  return static_cast<std::int64_t>(std::floor(r));
}

namespace {

struct Plan {
  double dt = 0.0;         // grid width in slow time t
  double ratio = 0.0;      // dt / eps
  double sqrt_ratio = 0.0;
  std::int64_t steps = 0;
  int substeps = 1;
  const ControlFunction* control = nullptr;
  double control_gain = 0.0;  // (delta / eps) * dt
};

double draw(RngStream& rng, int substeps, double inv_sqrt_sub) {
  if (substeps == 1) return rng.normal();
  double s = 0.0;
  for (int i = 0; i < substeps; ++i) s += rng.normal();
  return s * inv_sqrt_sub;
}

FunctionalAccumulator run_scalar(const SdeModel& model, const Plan& plan, const FunctionalSpec& f,
                                 RngStream& rng, const SimulationOptions& options) {
  const SdeModel& sim = model.chart_model ? *model.chart_model : model;
  const ScalarFn& from = model.chart_model ? model.chart_from : ScalarFn{};
  const ScalarFn& b = sim.scalar_drift;
  const ScalarFn& sig = sim.scalar_diffusion;
  const bool const_sigma = sim.constant_diffusion;
  const double inv_sqrt_sub = 1.0 / std::sqrt(static_cast<double>(plan.substeps));
  const auto& fs = f.scalar;

  double z = model.chart_model ? model.chart_to(model.initial_state[0]) : model.initial_state[0];
  const double sigma0 = sig(z);
  double x = from ? from(z) : z;
  double fz = fs(0.0, x);
  double cont = 0.0, riem = 0.0, sup = 0.0;

  FunctionalAccumulator acc;
  Vector zv(1);
  auto publish = [&](std::int64_t k) {
    acc.xi_continuous = Vector::Constant(1, cont);
    acc.xi_riemann = Vector::Constant(1, riem);
    acc.sup_norm_seen = sup;
    acc.steps = k;
    acc.t_current = static_cast<double>(k) * plan.dt;
    zv[0] = x;
    options.observer(k, acc.t_current, zv, acc);
  };
  if (options.observer) publish(0);

  for (std::int64_t k = 0; k < plan.steps; ++k) {
    const double s = const_sigma ? sigma0 : sig(z);
    const double xi = draw(rng, plan.substeps, inv_sqrt_sub);
    double znew = z + b(z) * plan.ratio + s * plan.sqrt_ratio * xi;
    if (plan.control) {
      const double c = plan.control_gain * s * (*plan.control)(static_cast<double>(k) * plan.dt)[0];
      if (c != 0.0) znew += c;
    }
    if (!(std::abs(znew) <= options.blowup_bound))
      throw TrajectoryExploded(static_cast<std::size_t>(k + 1), std::abs(znew));
    z = znew;
    x = from ? from(z) : z;
    const double f1 = fs(static_cast<double>(k + 1) * plan.dt, x);
    riem += fz * plan.dt;
    cont += 0.5 * (fz + f1) * plan.dt;
    sup = std::max(sup, std::abs(cont));
    fz = f1;
    if (options.observer) publish(k + 1);
  }
  acc.xi_continuous = Vector::Constant(1, cont);
  acc.xi_riemann = Vector::Constant(1, riem);
  acc.sup_norm_seen = sup;
  acc.steps = plan.steps;
  acc.t_current = static_cast<double>(plan.steps) * plan.dt;
  acc.terminal_state = Vector::Constant(1, x);
  return acc;
}

Vector to_model(const SdeModel& model, const Vector& z) {
  if (!model.chart_model) return z;
  return z.unaryExpr([&](double v) { return model.chart_from(v); });
}

FunctionalAccumulator run_vector(const SdeModel& model, const Plan& plan, const FunctionalSpec& f,
                                 RngStream& rng, const SimulationOptions& options) {
  const SdeModel& sim = model.chart_model ? *model.chart_model : model;
  const int d = sim.dim_state;
  const int m = sim.dim_noise;
  const int n = f.dim_out;
  if (f.dim_state != model.dim_state)
    throw Error("euler", "functional dimension does not match the model state");
  const double inv_sqrt_sub = 1.0 / std::sqrt(static_cast<double>(plan.substeps));

  Vector z = model.chart_model ? model.initial_state.unaryExpr([&](double v) { return model.chart_to(v); }).eval()
                               : model.initial_state;
  if (z.size() != d) throw Error("euler", "initial state has wrong dimension");
  Vector x = to_model(model, z);
  Vector bz(d), noise(m), fz(n), f1(n);
  Matrix s(d, m);
  if (sim.constant_diffusion) sim.diffusion(z, s);
  f.value(0.0, x, fz);

  FunctionalAccumulator acc;
  acc.xi_continuous = Vector::Zero(n);
  acc.xi_riemann = Vector::Zero(n);
  if (options.observer) options.observer(0, 0.0, x, acc);

  for (std::int64_t k = 0; k < plan.steps; ++k) {
    sim.drift(z, bz);
    if (!sim.constant_diffusion) sim.diffusion(z, s);
    for (int j = 0; j < m; ++j) noise[j] = draw(rng, plan.substeps, inv_sqrt_sub);
    Vector znew = z + bz * plan.ratio + s * noise * plan.sqrt_ratio;
    if (plan.control) {
      const Vector c = plan.control_gain * (s * (*plan.control)(static_cast<double>(k) * plan.dt));
      if (!c.isZero(0.0)) znew += c;
    }
    const double norm = znew.norm();
    if (!(norm <= options.blowup_bound))
      throw TrajectoryExploded(static_cast<std::size_t>(k + 1), norm);
    z = znew;
    x = to_model(model, z);
    f.value(static_cast<double>(k + 1) * plan.dt, x, f1);
    acc.xi_riemann += fz * plan.dt;
    acc.xi_continuous += 0.5 * (fz + f1) * plan.dt;
    acc.sup_norm_seen = std::max(acc.sup_norm_seen, acc.xi_continuous.norm());
    fz = f1;
    acc.steps = k + 1;
    acc.t_current = static_cast<double>(k + 1) * plan.dt;
    if (options.observer) options.observer(k + 1, acc.t_current, x, acc);
  }
  acc.steps = plan.steps;
  acc.t_current = static_cast<double>(plan.steps) * plan.dt;
  acc.terminal_state = x;
  return acc;
}

FunctionalAccumulator run(const SdeModel& model, const Plan& plan, const FunctionalSpec& f,
                          RngStream& rng, const SimulationOptions& options) {
  const SdeModel& sim = model.chart_model ? *model.chart_model : model;
  if (sim.is_scalar() && model.dim_state == 1 && f.is_scalar())
    return run_scalar(model, plan, f, rng, options);
  return run_vector(model, plan, f, rng, options);
}

Plan make_plan(const StepSchedule& schedule, double horizon, int fine_factor, int substeps) {
  if (!(horizon > 0.0)) throw Error("euler", "horizon must be positive");
  Plan p;
  p.dt = schedule.delta_step / fine_factor;
  p.ratio = p.dt / schedule.epsilon;
  p.sqrt_ratio = std::sqrt(p.ratio);
  const double r = horizon / p.dt;
  if (!(r < 9.0e18)) throw Error("euler", "horizon / step does not fit in a 64-bit step count");
  p.steps = grid_steps(horizon, p.dt);
  p.substeps = substeps;
  return p;
}

}  // namespace

FunctionalAccumulator simulate_euler(const SdeModel& model, const StepSchedule& schedule,
                                     const FunctionalSpec& f, double horizon, RngStream& rng,
                                     const SimulationOptions& options) {
  return run(model, make_plan(schedule, horizon, 1, 1), f, rng, options);
}

FunctionalAccumulator simulate_reference(const SdeModel& model, const StepSchedule& schedule,
                                         int fine_factor, const FunctionalSpec& f, double horizon,
                                         RngStream& rng, int noise_substeps,
                                         const SimulationOptions& options) {
  if (fine_factor < 10) throw Error("euler", "fine_factor must be at least 10");
  if (noise_substeps < 1) throw Error("euler", "noise_substeps must be at least 1");
  return run(model, make_plan(schedule, horizon, fine_factor, noise_substeps), f, rng, options);
}

FunctionalAccumulator simulate_controlled(const SdeModel& model, const StepSchedule& schedule,
                                          const ControlFunction& psi, const FunctionalSpec& f,
                                          double horizon, RngStream& rng,
                                          const SimulationOptions& options) {
  if (schedule.regime != Regime::MDP) throw Error("euler", "controlled simulation requires the MDP regime");
  const SdeModel& sim = model.chart_model ? *model.chart_model : model;
  if (psi.dim_noise() != sim.dim_noise) throw Error("euler", "control dimension does not match the noise");
  Plan plan = make_plan(schedule, horizon, 1, 1);
  plan.control = &psi;
  plan.control_gain = schedule.mdp_scale / schedule.epsilon * plan.dt;
  return run(model, plan, f, rng, options);
}

}  // namespace ergosim
