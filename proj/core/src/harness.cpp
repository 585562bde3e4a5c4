#include "ergosim/harness.hpp"

#include "ergosim/error.hpp"
#include "ergosim/rng.hpp"
#include "ergosim/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

#ifndef ERGOSIM_VERSION
#define ERGOSIM_VERSION "unknown"
#endif

namespace ergosim {

std::string code_version() { return ERGOSIM_VERSION; }

std::optional<ExperimentKind> parse_experiment_kind(const std::string& name) {
  if (name == "LLN_RATE") return ExperimentKind::LLN_RATE;
  if (name == "CLT_NORMALITY") return ExperimentKind::CLT_NORMALITY;
  if (name == "MDP_TAIL") return ExperimentKind::MDP_TAIL;
  if (name == "SCHEDULE_VIOLATION") return ExperimentKind::SCHEDULE_VIOLATION;
  if (name == "RIEMANN_VS_CONTINUOUS") return ExperimentKind::RIEMANN_VS_CONTINUOUS;
  return std::nullopt;
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::LLN_RATE: return "LLN_RATE";
    case ExperimentKind::CLT_NORMALITY: return "CLT_NORMALITY";
    case ExperimentKind::MDP_TAIL: return "MDP_TAIL";
    case ExperimentKind::SCHEDULE_VIOLATION: return "SCHEDULE_VIOLATION";
    case ExperimentKind::RIEMANN_VS_CONTINUOUS: return "RIEMANN_VS_CONTINUOUS";
  }
  return "?";
}

bool ExperimentReport::all_passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(),
                     [](const Verdict& v) { return v.informative || v.passed; });
}

namespace {

std::string number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct ReplicateOut {
  bool failed = false;
  double xi = 0.0;
  double xi_riemann = 0.0;
  double norm = 0.0;
  double sup = 0.0;
};

struct Batch {
  StepSchedule schedule;
  double horizon = 0.0;
  std::vector<ReplicateOut> out;
  std::size_t failed = 0;
};

Batch run_batch(const ExperimentSpec& spec, const StepSchedule& schedule, std::uint64_t tag) {
  Batch b;
  b.schedule = schedule;
  b.out.resize(spec.replicates);
  parallel_for(spec.replicates, spec.threads, [&](std::size_t i) {
    RngStream rng(spec.master_seed, derive_stream_id(stream_purpose::replicate, i, tag));
    try {
      const auto acc = simulate_euler(spec.model, schedule, spec.f, spec.horizon, rng);
      b.out[i] = {false, acc.xi_continuous[0], acc.xi_riemann[0], acc.xi_continuous.norm(),
                  acc.sup_norm_seen};
    } catch (const TrajectoryExploded&) {
      b.out[i].failed = true;
    }
  });
  b.horizon = static_cast<double>(grid_steps(spec.horizon, schedule.delta_step)) * schedule.delta_step;
  for (const auto& r : b.out) b.failed += r.failed ? 1 : 0;
  if (static_cast<double>(b.failed) > 0.01 * static_cast<double>(spec.replicates))
    throw Error("harness", std::to_string(b.failed) + " of " + std::to_string(spec.replicates) +
                               " replicates exploded at eps = " + number(schedule.epsilon) +
                               "; the schedule is too coarse for the drift");
  return b;
}

SummaryRow summarize(const ExperimentSpec& spec, const Batch& b, double scale, std::string arm) {
  SummaryRow row;
  row.arm = std::move(arm);
  row.epsilon = b.schedule.epsilon;
  row.delta_step = b.schedule.delta_step;
  row.delta_scale = b.schedule.mdp_scale;
  row.horizon = b.horizon;
  row.failed = b.failed;
  row.first_replicate = 0;
  row.last_replicate = spec.replicates - 1;
  std::vector<double> xi, xr, sup, gap;
  std::vector<std::size_t> exceed(spec.mdp_levels.size(), 0);
  for (const auto& r : b.out) {
    if (r.failed) continue;
    xi.push_back(scale * r.xi);
    xr.push_back(scale * r.xi_riemann);
    sup.push_back(r.sup);
    gap.push_back(std::abs(r.xi - r.xi_riemann) / std::sqrt(b.schedule.epsilon));
    for (std::size_t l = 0; l < spec.mdp_levels.size(); ++l)
      if (scale * r.norm > spec.mdp_levels[l]) ++exceed[l];
  }
  row.n = xi.size();
  row.mean = mean(xi);
  row.var = variance(xi);
  row.sup_mean = mean(sup);
  row.sup_se = standard_error(sup);
  row.mean_riemann = mean(xr);
  row.var_riemann = variance(xr);
  row.riemann_gap = mean(gap);
  for (auto e : exceed) row.tail_freq.push_back(row.n ? static_cast<double>(e) / static_cast<double>(row.n) : 0.0);
  return row;
}

ExperimentReport start_report(const ExperimentSpec& spec) {
  ExperimentReport r;
  r.kind = spec.kind;
  r.model_name = spec.model.name;
  r.model_params = spec.model.params;
  r.functional = spec.f.description;
  r.regime = to_string(spec.regime);
  r.policy = spec.policy;
  r.invalid_policy = spec.invalid_policy;
  r.horizon = spec.horizon;
  r.replicates = spec.replicates;
  r.master_seed = spec.master_seed;
  r.epsilons = spec.epsilons;
  r.mdp_levels = spec.mdp_levels;
  r.code_version = code_version();
  if (!spec.f.centralized) r.flags.push_back("functional not marked centralized");
  return r;
}

std::uint64_t tag_of(std::size_t eps_index, std::uint64_t arm) {
  return (arm << 32) | static_cast<std::uint64_t>(eps_index);
}

bool is_zero_functional(const std::vector<SummaryRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const SummaryRow& r) {
    return r.sup_mean == 0.0 && r.var == 0.0 && r.mean == 0.0;
  });
}

void require_epsilons_for_slope(const ExperimentSpec& spec) {
  if (spec.epsilons.size() < 3) throw Error("harness", "need >= 3 epsilons for slope fit");
}

}  // namespace

void validate_spec(const ExperimentSpec& spec) {
  if (spec.epsilons.empty()) throw Error("harness", "epsilon list is empty");
  for (std::size_t k = 0; k < spec.epsilons.size(); ++k) {
    if (!(spec.epsilons[k] > 0.0)) throw Error("harness", "epsilons must be positive");
    if (k > 0 && !(spec.epsilons[k] < spec.epsilons[k - 1]))
      throw Error("harness", "epsilon list must be strictly decreasing");
  }
  if (!(spec.horizon > 0.0)) throw Error("harness", "horizon T must be positive");
  if (spec.replicates < 2) throw Error("harness", "need at least 2 replicates");
  const bool heavy = spec.kind == ExperimentKind::CLT_NORMALITY || spec.kind == ExperimentKind::MDP_TAIL ||
                     spec.kind == ExperimentKind::SCHEDULE_VIOLATION;
  if (heavy && spec.replicates < 100) throw Error("harness", "need N >= 100 replicates for " + to_string(spec.kind));
  if (spec.kind == ExperimentKind::MDP_TAIL && spec.mdp_levels.empty())
    throw Error("harness", "MDP_TAIL needs at least one level");
  if (spec.kind == ExperimentKind::SCHEDULE_VIOLATION && !spec.invalid_policy)
    throw Error("harness", "SCHEDULE_VIOLATION needs an invalid schedule arm");
}

NormalityCheck check_normality(const std::vector<double>& sample, double target_variance,
                               double variance_tolerance, double level) {
  NormalityCheck c;
  c.variance = variance(sample);
  c.relative_error = std::abs(c.variance - target_variance) / target_variance;
  c.ks = ks_distance(sample, target_variance);
  c.ks_threshold = ks_threshold(sample.size(), level);
  c.variance_ok = c.relative_error <= variance_tolerance;
  c.ks_ok = c.ks < c.ks_threshold;
  return c;
}

double mdp_rate_closed_form(double level, double horizon, double mf) {
  return level * level / (2.0 * horizon * mf);
}

ExperimentReport run_lln_rate(const ExperimentSpec& spec) {
  validate_spec(spec);
  require_epsilons_for_slope(spec);
  ExperimentReport report = start_report(spec);
  for (std::size_t k = 0; k < spec.epsilons.size(); ++k) {
    const auto sch = StepSchedule::make(Regime::LLN, spec.policy, spec.epsilons[k], spec.model.holder_nu);
    report.rows.push_back(summarize(spec, run_batch(spec, sch, tag_of(k, 0)), 1.0, "main"));
  }
  if (is_zero_functional(report.rows)) {
    report.flags.push_back("zero functional");
    report.verdicts.push_back({"lln_slope", true, false, false, 0.0, 0.0,
                               "zero functional: all sup statistics are 0, slope undefined"});
    return report;
  }
  std::vector<double> eps, sups;
  for (const auto& r : report.rows) {
    eps.push_back(r.epsilon);
    sups.push_back(r.sup_mean);
  }
  const double slope = loglog_slope(eps, sups);
  report.fitted["lln_slope"] = slope;
  report.verdicts.push_back({"lln_slope", slope >= 0.4 && slope <= 0.6, false, false, slope, 0.1,
                             "slope of log E[sup |Xi|] vs log eps = " + number(slope) +
                                 ", accepted range [0.4, 0.6]"});
  bool monotone = true;
  std::string detail = "mean sup nonincreasing within 3 sigma";
  for (std::size_t k = 1; k < report.rows.size(); ++k) {
    const auto& a = report.rows[k - 1];
    const auto& b = report.rows[k];
    const double slack = 3.0 * std::hypot(a.sup_se, b.sup_se);
    if (b.sup_mean > a.sup_mean + slack) {
      monotone = false;
      detail = "mean sup increases from " + number(a.sup_mean) + " to " + number(b.sup_mean) +
               " at eps = " + number(b.epsilon);
    }
  }
  report.verdicts.push_back({"lln_monotone", monotone, false, false, 0.0, 3.0, detail});
  return report;
}

ExperimentReport run_clt_normality(const ExperimentSpec& spec, double mf_target) {
  validate_spec(spec);
  if (!(mf_target > 0.0)) throw Error("harness", "CLT target M_f must be positive");
  ExperimentReport report = start_report(spec);
  std::vector<double> last, last_r;
  double last_target = 0.0;
  for (std::size_t k = 0; k < spec.epsilons.size(); ++k) {
    const auto sch = StepSchedule::make(Regime::CLT, spec.policy, spec.epsilons[k], spec.model.holder_nu);
    const Batch b = run_batch(spec, sch, tag_of(k, 0));
    const double scale = 1.0 / std::sqrt(sch.epsilon);
    SummaryRow row = summarize(spec, b, scale, "main");
    const double target = row.horizon * mf_target;
    std::vector<double> s, sr;
    for (const auto& r : b.out)
      if (!r.failed) {
        s.push_back(scale * r.xi);
        sr.push_back(scale * r.xi_riemann);
      }
    row.ks = ks_distance(s, target);
    row.ks_riemann = ks_distance(sr, target);
    report.rows.push_back(row);
    last = std::move(s);
    last_r = std::move(sr);
    last_target = target;
  }
  report.fitted["target_variance"] = last_target;
  report.fitted["mf_target"] = mf_target;
  const auto add = [&](const std::string& prefix, const std::vector<double>& sample) {
    const NormalityCheck c = check_normality(sample, last_target);
    report.verdicts.push_back({prefix + "_variance", c.variance_ok, false, false, c.relative_error, 0.10,
                               "variance " + number(c.variance) + " vs T*M_f = " + number(last_target) +
                                   " (relative error " + number(c.relative_error) + ")"});
    report.verdicts.push_back({prefix + "_ks", c.ks_ok, false, false, c.ks, c.ks_threshold,
                               "KS distance " + number(c.ks) + " vs threshold " +
                                   number(c.ks_threshold) + " at level 0.01"});
  };
  add("clt", last);
  add("riemann", last_r);
  return report;
}

ExperimentReport run_mdp_tail(const ExperimentSpec& spec, const std::map<double, double>& rate_target) {
  validate_spec(spec);
  for (double x : spec.mdp_levels)
    if (!rate_target.count(x)) throw Error("harness", "no rate target for level " + number(x));
  ExperimentReport report = start_report(spec);
  report.flags.push_back("MDP gap tolerance is calibration-grade: the limit has no rate, 35% is a desk-scale choice");

  std::vector<StepSchedule> schedules;
  for (double eps : spec.epsilons) {
    StepSchedule sch;
    if (spec.mdp_clt_sanity) {
      // gamma = 1/2 sits outside the MDP range on purpose; the step still obeys the CLT bound.
      if (auto why = schedule_violation(Regime::CLT, spec.policy, spec.model.holder_nu))
        throw Error("harness", *why);
      SchedulePolicy half = spec.policy;
      half.gamma_mdp = 0.5;
      sch = StepSchedule::make_unchecked(Regime::MDP, half, eps);
    } else {
      sch = StepSchedule::make(Regime::MDP, spec.policy, eps, spec.model.holder_nu);
    }
    for (double x : spec.mdp_levels) {
      const double predicted = std::erfc(std::sqrt(rate_target.at(x) / sch.beta()));
      if (predicted < 10.0 / static_cast<double>(spec.replicates))
        throw Error("harness", "level " + number(x) + " has predicted probability " + number(predicted) +
                                   " < 10/N at eps = " + number(eps));
    }
    schedules.push_back(sch);
  }
  for (std::size_t k = 0; k < schedules.size(); ++k) {
    const Batch b = run_batch(spec, schedules[k], tag_of(k, 0));
    report.rows.push_back(summarize(spec, b, 1.0 / schedules[k].mdp_scale, "main"));
  }

  if (spec.mdp_clt_sanity) {
    report.flags.push_back("sanity mode: delta(eps) = sqrt(eps), compared with the Gaussian tail");
    for (std::size_t l = 0; l < spec.mdp_levels.size(); ++l) {
      const double x = spec.mdp_levels[l];
      const double predicted = std::erfc(std::sqrt(rate_target.at(x)));
      for (std::size_t k = 0; k < schedules.size(); ++k) {
        const auto& row = report.rows[k];
        const double p = row.tail_freq[l];
        const double se = std::sqrt(predicted * (1.0 - predicted) / static_cast<double>(row.n));
        const double dev = std::abs(p - predicted);
        report.verdicts.push_back({"mdp_clt_consistency[x=" + number(x) + ",eps=" + number(row.epsilon) + "]",
                                   dev <= 3.0 * se, false, false, dev, 3.0 * se,
                                   "tail frequency " + number(p) + " vs Gaussian tail " + number(predicted)});
      }
    }
    return report;
  }

  for (std::size_t l = 0; l < spec.mdp_levels.size(); ++l) {
    const double x = spec.mdp_levels[l];
    const double target = -rate_target.at(x);
    const std::string tag = "x=" + number(x);
    std::vector<double> v;
    bool censored = false;
    for (std::size_t k = 0; k < schedules.size(); ++k) {
      const double p = report.rows[k].tail_freq[l];
      if (p == 0.0) censored = true;
      const double val = schedules[k].beta() * std::log(p);
      report.fitted["beta_log_p[" + tag + ",eps=" + number(schedules[k].epsilon) + "]"] = val;
      v.push_back(val);
    }
    report.fitted["minus_rate[" + tag + "]"] = target;
    if (censored) {
      report.flags.push_back("level " + number(x) + " censored: zero exceedances; excluded from verdict");
      continue;
    }
    bool toward = true;
    for (std::size_t k = 1; k < v.size(); ++k)
      if (!(std::abs(v[k] - target) < std::abs(v[k - 1] - target))) toward = false;
    std::string trend = "beta log p:";
    for (double val : v) trend += " " + number(val);
    trend += " vs -I = " + number(target);
    report.verdicts.push_back({"mdp_trend[" + tag + "]", toward, false, true, v.back(), target,
                               trend + (toward ? " (approaching)" : " (not monotone toward -I)")});
    const double gap = target == 0.0 ? std::abs(v.back()) : std::abs(v.back() - target) / std::abs(target);
    const bool gap_ok = target == 0.0 ? gap <= 1e-12 : gap < 0.35;
    report.verdicts.push_back({"mdp_gap[" + tag + "]", gap_ok, false, true, gap, 0.35,
                               "final relative gap " + number(gap) + " (calibration-grade tolerance 0.35)"});
  }
  return report;
}

ExperimentReport run_schedule_violation(const ExperimentSpec& spec, double mf_target) {
  validate_spec(spec);
  ExperimentReport report = start_report(spec);
  for (std::size_t k = 0; k < spec.epsilons.size(); ++k) {
    const double eps = spec.epsilons[k];
    const auto valid = StepSchedule::make(Regime::CLT, spec.policy, eps, spec.model.holder_nu);
    const auto invalid = StepSchedule::make_unchecked(Regime::CLT, *spec.invalid_policy, eps);
    report.rows.push_back(summarize(spec, run_batch(spec, valid, tag_of(k, 0)), 1.0 / std::sqrt(eps), "valid"));
    report.rows.push_back(summarize(spec, run_batch(spec, invalid, tag_of(k, 1)), 1.0 / std::sqrt(eps), "invalid"));
  }
  if (auto why = schedule_violation(Regime::CLT, *spec.invalid_policy, spec.model.holder_nu))
    report.flags.push_back("invalid arm: " + *why);
  else
    report.flags.push_back("invalid arm satisfies the CLT schedule condition");
  const auto& v = report.rows[report.rows.size() - 2];
  const auto& inv = report.rows.back();
  const double tv = v.horizon * mf_target;
  const double ti = inv.horizon * mf_target;
  const double ev = std::abs(v.var - tv) / tv;
  const double ei = std::abs(inv.var - ti) / ti;
  report.fitted["target_variance"] = tv;
  report.verdicts.push_back({"valid_variance", ev <= 0.10, false, false, ev, 0.10,
                             "valid arm variance " + number(v.var) + " vs " + number(tv)});
  report.verdicts.push_back({"invalid_deviation", ei <= 0.10, true, false, ei, 0.10,
                             "invalid arm variance " + number(inv.var) + " deviates from " + number(ti) +
                                 " by " + number(100.0 * ei) + "%"});
  return report;
}

ExperimentReport run_riemann_vs_continuous(const ExperimentSpec& spec) {
  validate_spec(spec);
  require_epsilons_for_slope(spec);
  ExperimentReport report = start_report(spec);
  for (std::size_t k = 0; k < spec.epsilons.size(); ++k) {
    const auto sch = StepSchedule::make(Regime::CLT, spec.policy, spec.epsilons[k], spec.model.holder_nu);
    report.rows.push_back(summarize(spec, run_batch(spec, sch, tag_of(k, 0)), 1.0 / std::sqrt(sch.epsilon), "main"));
  }
  bool decreasing = true;
  std::string detail = "E|Xi - Xi^R| / sqrt(eps):";
  for (std::size_t k = 0; k < report.rows.size(); ++k) {
    detail += " " + number(report.rows[k].riemann_gap);
    if (k > 0 && !(report.rows[k].riemann_gap < report.rows[k - 1].riemann_gap)) decreasing = false;
  }
  if (is_zero_functional(report.rows)) {
    report.flags.push_back("zero functional");
    decreasing = true;
  }
  report.verdicts.push_back({"riemann_gap_decreasing", decreasing, false, false,
                             report.rows.back().riemann_gap, 0.0, detail});
  return report;
}

std::string report_to_json(const ExperimentReport& r, const std::string& resolved_config,
                           const std::map<std::string, std::string>& timestamps) {
  using nlohmann::json;
  const auto policy = [](const SchedulePolicy& p) {
    return json{{"theta_step", p.theta_step}, {"c_step", p.c_step}, {"gamma_mdp", p.gamma_mdp}};
  };
  json j;
  j["kind"] = to_string(r.kind);
  j["spec"] = {{"model", r.model_name},
               {"model_params", r.model_params},
               {"functional", r.functional},
               {"regime", r.regime},
               {"policy", policy(r.policy)},
               {"horizon", r.horizon},
               {"replicates", r.replicates},
               {"master_seed", r.master_seed},
               {"epsilons", r.epsilons},
               {"mdp_levels", r.mdp_levels}};
  if (r.invalid_policy) j["spec"]["invalid_policy"] = policy(*r.invalid_policy);
  j["rows"] = json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"arm", row.arm},
                         {"epsilon", row.epsilon},
                         {"delta_step", row.delta_step},
                         {"delta_scale", row.delta_scale},
                         {"horizon", row.horizon},
                         {"n", row.n},
                         {"failed", row.failed},
                         {"replicate_range", {row.first_replicate, row.last_replicate}},
                         {"mean", row.mean},
                         {"var", row.var},
                         {"sup_mean", row.sup_mean},
                         {"sup_se", row.sup_se},
                         {"ks", row.ks},
                         {"mean_riemann", row.mean_riemann},
                         {"var_riemann", row.var_riemann},
                         {"ks_riemann", row.ks_riemann},
                         {"riemann_gap", row.riemann_gap},
                         {"tail_freq", row.tail_freq}});
  }
  j["fitted"] = r.fitted;
  j["verdicts"] = json::array();
  for (const auto& v : r.verdicts)
    j["verdicts"].push_back({{"name", v.name},
                             {"passed", v.passed},
                             {"informative", v.informative},
                             {"calibration_grade", v.calibration_grade},
                             {"value", v.value},
                             {"tolerance", v.tolerance},
                             {"detail", v.detail}});
  j["flags"] = r.flags;
  j["all_passed"] = r.all_passed();
  j["provenance"] = {{"code_version", r.code_version}, {"master_seed", r.master_seed}};
  if (!resolved_config.empty()) j["provenance"]["config"] = json::parse(resolved_config);
  if (!timestamps.empty()) j["provenance"]["timestamps"] = timestamps;
  return j.dump(2) + "\n";
}

void write_summary_csv(std::ostream& out, const ExperimentReport& r) {
  out << "epsilon,delta_step,delta_scale,n,mean,var,sup_mean,ks";
  for (double x : r.mdp_levels) out << ",tail_freq_" << number(x);
  out << ",arm,failed,var_riemann,ks_riemann\n";
  char buf[40];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const auto& row : r.rows) {
    put(row.epsilon);
    out << ',';
    put(row.delta_step);
    out << ',';
    put(row.delta_scale);
    out << ',' << row.n << ',';
    put(row.mean);
    out << ',';
    put(row.var);
    out << ',';
    put(row.sup_mean);
    out << ',';
    put(row.ks);
    for (double f : row.tail_freq) {
      out << ',';
      put(f);
    }
    out << ',' << row.arm << ',' << row.failed << ',';
    put(row.var_riemann);
    out << ',';
    put(row.ks_riemann);
    out << "\n";
  }
}

}  // namespace ergosim
