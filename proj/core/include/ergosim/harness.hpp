#pragma once

#include "ergosim/euler.hpp"
#include "ergosim/functional.hpp"
#include "ergosim/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ergosim {

enum class ExperimentKind { LLN_RATE, CLT_NORMALITY, MDP_TAIL, SCHEDULE_VIOLATION, RIEMANN_VS_CONTINUOUS };

std::optional<ExperimentKind> parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::CLT_NORMALITY;
  SdeModel model;
  FunctionalSpec f;
  Regime regime = Regime::CLT;
  SchedulePolicy policy;
  /// Second arm of SCHEDULE_VIOLATION; not checked for admissibility.
  std::optional<SchedulePolicy> invalid_policy;
  std::vector<double> epsilons;
  double horizon = 1.0;
  std::size_t replicates = 2000;
  std::vector<double> mdp_levels;
  /// MDP_TAIL sanity mode: delta(eps) = sqrt(eps), so beta = 1 and the tail
  /// frequencies are checked against the CLT's Gaussian tail instead.
  bool mdp_clt_sanity = false;
  std::uint64_t master_seed = 0;
  /// Execution only; never part of the report.
  unsigned threads = 0;
};

/// Throws Error("harness", ...) for a decreasing-epsilon violation, too few
/// replicates, or missing MDP levels.
void validate_spec(const ExperimentSpec& spec);

/// Statistics of one epsilon (and one arm for SCHEDULE_VIOLATION). The
/// statistic is Xi(T) for LLN_RATE, eps^{-1/2} Xi(T) for CLT-type kinds and
/// Xi(T) / delta(eps) for MDP_TAIL, first component; tails use the norm.
struct SummaryRow {
  std::string arm = "main";
  double epsilon = 0.0;
  double delta_step = 0.0;
  double delta_scale = 1.0;
  double horizon = 0.0;  // snapped to the grid
  std::size_t n = 0;     // successful replicates
  std::size_t failed = 0;
  std::uint64_t first_replicate = 0;
  std::uint64_t last_replicate = 0;
  double mean = 0.0;
  double var = 0.0;
  double sup_mean = 0.0;
  double sup_se = 0.0;
  double ks = 0.0;
  double mean_riemann = 0.0;
  double var_riemann = 0.0;
  double ks_riemann = 0.0;
  /// E|Xi - Xi^R| / sqrt(eps)
  double riemann_gap = 0.0;
  std::vector<double> tail_freq;  // one per mdp level
};

struct Verdict {
  std::string name;
  bool passed = true;
  /// Reported but not part of the pass/fail outcome.
  bool informative = false;
  /// Tolerance is a desk-scale calibration, not a limit statement.
  bool calibration_grade = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::CLT_NORMALITY;
  std::string model_name;
  std::map<std::string, double> model_params;
  std::string functional;
  std::string regime;
  SchedulePolicy policy;
  std::optional<SchedulePolicy> invalid_policy;
  double horizon = 0.0;
  std::size_t replicates = 0;
  std::uint64_t master_seed = 0;
  std::vector<double> epsilons;
  std::vector<double> mdp_levels;
  std::vector<SummaryRow> rows;
  std::map<std::string, double> fitted;  // slopes and targets
  std::vector<Verdict> verdicts;
  std::vector<std::string> flags;
  std::string code_version;

  bool all_passed() const;
};

/// KS distance, variance and their verdicts for a sample that should be
/// N(0, target_variance).
struct NormalityCheck {
  double variance = 0.0;
  double relative_error = 0.0;
  double ks = 0.0;
  double ks_threshold = 0.0;
  bool variance_ok = false;
  bool ks_ok = false;
};
NormalityCheck check_normality(const std::vector<double>& sample, double target_variance,
                               double variance_tolerance = 0.10, double level = 0.01);

/// I(x) = x^2 / (2 T M) for scalar homogeneous f.
double mdp_rate_closed_form(double level, double horizon, double mf);

ExperimentReport run_lln_rate(const ExperimentSpec& spec);
ExperimentReport run_clt_normality(const ExperimentSpec& spec, double mf_target);
ExperimentReport run_mdp_tail(const ExperimentSpec& spec, const std::map<double, double>& rate_target);
ExperimentReport run_schedule_violation(const ExperimentSpec& spec, double mf_target);
ExperimentReport run_riemann_vs_continuous(const ExperimentSpec& spec);

/// Full report as JSON. `resolved_config` (already JSON text) and
/// `timestamps` are embedded when nonempty.
std::string report_to_json(const ExperimentReport& report, const std::string& resolved_config = "",
                           const std::map<std::string, std::string>& timestamps = {});
/// epsilon,delta_step,delta_scale,n,mean,var,sup_mean,ks,tail_freq_<x>...,arm,failed,var_riemann,ks_riemann
void write_summary_csv(std::ostream& out, const ExperimentReport& report);

std::string code_version();

}  // namespace ergosim
