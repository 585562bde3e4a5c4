#pragma once

#include "ergosim/functional.hpp"
#include "ergosim/model.hpp"
#include "ergosim/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

namespace ergosim {

enum class Regime { LLN, CLT, MDP };

std::optional<Regime> parse_regime(const std::string& name);
std::string to_string(Regime regime);

/// Delta(eps) = c_step * eps^theta_step, delta(eps) = eps^gamma_mdp.
struct SchedulePolicy {
  double theta_step = 2.5;
  double c_step = 1.0;
  double gamma_mdp = 0.35;
};

/// Returns the violated inequality, or nullopt if the policy is admissible
/// for the regime, e.g. "CLT requires theta > 1 + 1/nu = 2.0, got 1.5".
std::optional<std::string> schedule_violation(Regime regime, const SchedulePolicy& policy,
                                              double holder_nu);

struct StepSchedule {
  double epsilon = 0.0;
  double delta_step = 0.0;  // Delta(eps)
  double mdp_scale = 1.0;   // delta(eps)
  Regime regime = Regime::LLN;
  SchedulePolicy policy;

  double beta() const { return epsilon / (mdp_scale * mdp_scale); }
  double step_ratio() const { return delta_step / epsilon; }

  /// Throws Error("euler", <violated inequality>) for inadmissible policies.
  static StepSchedule make(Regime regime, const SchedulePolicy& policy, double epsilon,
                           double holder_nu);
  /// Same construction without the admissibility check; used to run the
  /// deliberately invalid arm of a schedule comparison.
  static StepSchedule make_unchecked(Regime regime, const SchedulePolicy& policy, double epsilon);
};

/// Running path functionals along the Euler grid.
struct FunctionalAccumulator {
  Vector xi_continuous;  // trapezoid rule on grid endpoints
  Vector xi_riemann;     // left-endpoint sum
  double sup_norm_seen = 0.0;
  double t_current = 0.0;
  std::int64_t steps = 0;
  Vector terminal_state;  // in the model's own coordinates
};

/// Deterministic control psi on [0, T] with int ||psi||^2 <= l2_bound.
class ControlFunction {
 public:
  /// Throws Error("euler", "control exceeds L2 bound ...") when the
  /// numerically integrated norm is above l2_bound + 1e-9.
  static ControlFunction make(std::function<Vector(double)> psi, int dim_noise, double l2_bound,
                              double horizon);
  static ControlFunction zero(int dim_noise, double horizon);
  /// psi(s) = c for all s.
  static ControlFunction constant(const Vector& c, double l2_bound, double horizon);

  Vector operator()(double t) const { return psi_(t); }
  int dim_noise() const { return dim_noise_; }
  double l2_bound() const { return l2_bound_; }
  double l2_norm_sq() const { return l2_norm_sq_; }
  bool is_zero() const { return zero_; }

 private:
  std::function<Vector(double)> psi_;
  int dim_noise_ = 1;
  double l2_bound_ = 0.0;
  double l2_norm_sq_ = 0.0;
  bool zero_ = false;
};

/// Called after every accepted step k (and once at k = 0) with the grid time,
/// the state in model coordinates and the accumulator.
using PathObserver =
    std::function<void(std::int64_t k, double t, const Vector& z, const FunctionalAccumulator& acc)>;

struct SimulationOptions {
  double blowup_bound = 1e8;
  PathObserver observer;
};

/// Observer writing t,z_1..z_d,xi_1..xi_n every `stride` steps.
PathObserver csv_snapshot_sink(std::ostream& out, int dim_state, int dim_out, std::int64_t stride);

/// k * delta with k * delta <= t < (k + 1) * delta; grid points map to themselves.
double grid_floor(double t, double delta);

/// Number of whole steps of width delta in [0, horizon].
std::int64_t grid_steps(double horizon, double delta);

FunctionalAccumulator simulate_euler(const SdeModel& model, const StepSchedule& schedule,
                                     const FunctionalSpec& f, double horizon, RngStream& rng,
                                     const SimulationOptions& options = {});

/// Euler on the refined step Delta / fine_factor. Each fine increment is the
/// normalized sum of `noise_substeps` normals, so that runs with
/// fine_factor * noise_substeps equal consume the same Brownian path.
FunctionalAccumulator simulate_reference(const SdeModel& model, const StepSchedule& schedule,
                                         int fine_factor, const FunctionalSpec& f, double horizon,
                                         RngStream& rng, int noise_substeps = 1,
                                         const SimulationOptions& options = {});

/// Euler with the additional drift (delta/eps) sigma(Z) psi(t_k) per unit time.
FunctionalAccumulator simulate_controlled(const SdeModel& model, const StepSchedule& schedule,
                                          const ControlFunction& psi, const FunctionalSpec& f,
                                          double horizon, RngStream& rng,
                                          const SimulationOptions& options = {});

}  // namespace ergosim
