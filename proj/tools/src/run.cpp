#include "ergosim/cli.hpp"

#include "ergosim/density.hpp"
#include "ergosim/error.hpp"
#include "ergosim/poisson1d.hpp"
#include "ergosim/rng.hpp"
#include "ergosim/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ergosim::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_now(const char* format) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, format, &tm);
  return buf;
}

std::string fmt(double v, int digits = 6) {
  std::ostringstream ss;
  ss << std::setprecision(digits) << v;
  return ss.str();
}

// Logs progress lines unless --quiet.
struct Progress {
  std::ostream& log;
  bool quiet;
  void operator()(const std::string& line) const {
    if (!quiet) log << "[ergosim] " << line << '\n' << std::flush;
  }
};

fs::path make_run_directory(const std::string& sub, const RunConfig& c, const RunOptions& o) {
  const fs::path root = o.out_root.empty() ? fs::path(c.directory) : o.out_root;
  fs::create_directories(root);
  const std::string base =
      o.run_name ? *o.run_name : sub + "-" + utc_now("%Y%m%dT%H%M%SZ") + "-" + std::to_string(c.seed);
  fs::path dir = root / base;
  for (int k = 1; !o.run_name && fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cli", "cannot write '" + path.string() + "'");
  out << text;
}

bool wants(const RunConfig& c, const std::string& format) {
  return std::find(c.formats.begin(), c.formats.end(), format) != c.formats.end();
}

// Shared front half of the pipeline: model, density, centralized f.
struct Pipeline {
  SdeModel model;
  FunctionalSpec f;
  std::optional<InvariantDensity1D> pi;
};

Pipeline build_pipeline(const RunConfig& c, const Progress& progress) {
  Pipeline p;
  p.model = build_model(c);
  progress("model " + p.model.name);
  p.f = build_functional(c);
  if (p.model.dim_state == 1) {
    p.pi = invariant_density_1d(p.model);
    progress("invariant density: mode " + fmt(p.pi->mode()) + ", normalizer " + fmt(p.pi->normalizer()));
    if (c.centralize) {
      p.f = centralize(p.f, *p.pi);
      progress("centralized " + p.f.description);
    }
  } else if (c.centralize) {
    throw Error("cli", "centralization needs a one-dimensional model");
  }
  return p;
}

std::vector<double> poisson_grid(const RunConfig& c, const InvariantDensity1D& pi) {
  const double lo = c.grid_lo ? *c.grid_lo : pi.quantile(1e-10);
  const double hi = c.grid_hi ? *c.grid_hi : pi.quantile(1.0 - 1e-10);
  std::vector<double> g = uniform_grid(lo, hi, c.grid_points);
  std::erase_if(g, [&](double x) { return !pi.support().contains(x); });
  return g;
}

std::vector<double> slice_times(const RunConfig& c, const FunctionalSpec& f) {
  if (f.time_homogeneous) return {0.0};
  std::vector<double> t(c.mf_time_slices);
  for (std::size_t k = 0; k < t.size(); ++k)
    t[k] = c.horizon * static_cast<double>(k) / static_cast<double>(t.size() - 1);
  return t;
}

struct PoissonStage {
  std::vector<double> times;
  std::vector<PoissonSolution> solutions;
  CovarianceCurve curve;
};

PoissonStage solve_stage(const RunConfig& c, const Pipeline& p, const Progress& progress) {
  if (!p.pi) throw Error("cli", "Poisson solve needs a one-dimensional model");
  PoissonStage s;
  s.times = slice_times(c, p.f);
  const auto grid = poisson_grid(c, *p.pi);
  PoissonOptions opts;
  opts.tail_fraction = c.tail_fraction;
  for (double t : s.times) s.solutions.push_back(solve_poisson_1d(p.model, *p.pi, p.f, t, grid, opts));
  for (const auto& w : s.solutions.front().warnings) progress("warning: " + w);
  progress("Poisson solved on [" + fmt(grid.front()) + ", " + fmt(grid.back()) + "] with " +
           std::to_string(grid.size()) + " points at " + std::to_string(s.times.size()) + " time(s)");
  s.curve = mf_gradient_form(s.solutions, p.model, *p.pi, s.times);
  return s;
}

// Time average of the scalar M_f over [0, T].
double average_mf(const CovarianceCurve& curve, double horizon) {
  if (curve.times.size() == 1) return curve.matrices.front()(0, 0);
  double acc = 0.0;
  for (std::size_t k = 1; k < curve.times.size(); ++k)
    acc += 0.5 * (curve.times[k] - curve.times[k - 1]) *
           (curve.matrices[k - 1](0, 0) + curve.matrices[k](0, 0));
  return acc / horizon;
}

int polynomial_growth(const std::vector<double>& poly) {
  int deg = 0;
  for (std::size_t k = 0; k < poly.size(); ++k)
    if (poly[k] != 0.0) deg = static_cast<int>(k);
  return deg;
}

json condition_json(const ConditionCheck& c) {
  return {{"name", c.name},           {"passed", c.passed}, {"waived", c.waived},
          {"worst_margin", c.worst_margin}, {"fitted_constant", c.fitted_constant},
          {"observed", c.observed},   {"detail", c.detail}};
}

void print_table(std::ostream& out, const std::vector<Verdict>& verdicts) {
  out << std::left << std::setw(28) << "verdict" << std::setw(8) << "result" << std::setw(16) << "value"
      << std::setw(16) << "tolerance"
      << "detail\n";
  for (const auto& v : verdicts) {
    const std::string result = v.informative ? "INFO" : (v.passed ? "PASS" : "FAIL");
    out << std::left << std::setw(28) << v.name << std::setw(8) << result << std::setw(16) << fmt(v.value)
        << std::setw(16) << fmt(v.tolerance) << v.detail << (v.calibration_grade ? " [calibration-grade]" : "")
        << '\n';
  }
}

json base_document(const std::string& sub, const RunConfig& c) {
  json j;
  j["subcommand"] = sub;
  j["code_version"] = code_version();
  j["seed"] = c.seed;
  j["config"] = json::parse(config_to_json(c));
  return j;
}

// ---------------------------------------------------------------- validate

int cmd_validate(const RunConfig& c, const fs::path& dir, std::ostream& out, const Progress& progress) {
  const SdeModel model = build_model(c);
  const auto probes = default_probe_grid(model);
  const ConditionReport report = validate_conditions(model, probes);
  const FunctionalSpec f = build_functional(c);
  const ConditionCheck growth = check_functional_growth(f, probes, c.horizon);
  progress("checked " + std::to_string(probes.size()) + " probe states");

  json doc = base_document("validate", c);
  doc["model"] = model.name;
  doc["validated_in_chart"] = report.validated_in_chart;
  doc["conditions"] = json::array();
  std::vector<Verdict> verdicts;
  for (const auto& check : report.checks) {
    doc["conditions"].push_back(condition_json(check));
    verdicts.push_back({check.name, check.passed, false, false, check.worst_margin, 0.0,
                        check.waived ? "waived: " + check.detail : check.detail});
  }
  doc["conditions"].push_back(condition_json(growth));
  verdicts.push_back({growth.name, growth.passed, false, false, growth.worst_margin, 0.0, growth.detail});
  const bool ok = std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
  doc["all_passed"] = ok;
  if (wants(c, "json")) write_text(dir / "report.json", doc.dump(2) + "\n");
  print_table(out, verdicts);
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? PASS : VERDICT_FAIL;
}

// ----------------------------------------------------------------- poisson

int cmd_poisson(const RunConfig& c, const fs::path& dir, std::ostream& out, const Progress& progress) {
  const Pipeline p = build_pipeline(c, progress);
  const PoissonStage s = solve_stage(c, p, progress);
  const PoissonSolution& sol = s.solutions.front();
  {
    std::ofstream csv(dir / "poisson_solution.csv");
    write_poisson_csv(csv, sol);
  }

  json doc = base_document("poisson", c);
  doc["grid_points"] = sol.grid.size();
  doc["dropped"] = sol.dropped;
  doc["warnings"] = sol.warnings;
  doc["mf_gradient_form"] = s.curve.matrices.front()(0, 0);

  const double p0 = polynomial_growth(c.poly);
  std::vector<Verdict> verdicts;
  if (sol.fitted_exponents) {
    const TailExponents& fit = *sol.fitted_exponents;
    const ExponentSet e = exponents_from_fit(fit, p0, 0.0, p.f.time_homogeneous);
    const ExponentAudit audit =
        audit_mdp_exponents(p.model.recurrence_alpha, e, p.model.constant_diffusion, c.audit_slack);
    doc["fitted_exponents"] = {{"p1", fit.p1}, {"p2", fit.p2}, {"p3", fit.p3}, {"p1_logarithmic", fit.p1_logarithmic}};
    doc["audit"] = {{"alpha", audit.alpha}, {"verdict_mdp", audit.verdict_mdp}, {"failed", audit.failed_summary()}};
    for (const auto& r : audit.verdict_detail)
      verdicts.push_back({"audit " + r.name, r.passed || r.waived, true, false, 0.0, 0.0,
                          (r.waived ? "waived: " : "") + r.statement});
    out << "exponents p1=" << fmt(fit.p1) << " p2=" << fmt(fit.p2) << " p3=" << fmt(fit.p3) << '\n';
    out << "MDP exponent assumption: " << (audit.verdict_mdp ? "satisfied" : "violated (" + audit.failed_summary() + ")")
        << '\n';
  } else {
    out << "exponents: not fitted (support has no infinite end with enough tail points)\n";
  }
  out << "M_f (gradient form) = " << fmt(s.curve.matrices.front()(0, 0), 10) << '\n';
  print_table(out, verdicts);
  if (wants(c, "json")) write_text(dir / "report.json", doc.dump(2) + "\n");
  return PASS;
}

// ---------------------------------------------------------------------- mf

int cmd_mf(const RunConfig& c, const fs::path& dir, std::ostream& out, const Progress& progress) {
  const Pipeline p = build_pipeline(c, progress);
  const PoissonStage s = solve_stage(c, p, progress);
  {
    std::ofstream js(dir / "covariance.json");
    write_covariance_json(js, s.curve);
  }
  AutocorrelationOptions ao;
  ao.horizon_s = c.mf_horizon_s;
  ao.n_paths = c.mf_paths;
  ao.fine_step = c.mf_fine_step;
  ao.threads = c.threads;

  // Cross-check at the first, middle and last slice only; each costs a full
  // autocorrelation run.
  std::vector<std::size_t> slots{0};
  if (s.times.size() > 2) slots.push_back(s.times.size() / 2);
  if (s.times.size() > 1) slots.push_back(s.times.size() - 1);

  json doc = base_document("mf", c);
  doc["checks"] = json::array();
  std::vector<Verdict> verdicts;
  for (std::size_t k : slots) {
    const double t = s.times[k];
    progress("autocorrelation route at t = " + fmt(t) + " with " + std::to_string(ao.n_paths) + " paths");
    const CovarianceCurve ac = mf_autocorrelation_form(p.model, &*p.pi, p.f, t, c.seed, ao);
    const double g = s.curve.matrices[k](0, 0);
    const double a = ac.matrices.front()(0, 0);
    const double se = ac.standard_errors.empty() ? 0.0 : ac.standard_errors.front()(0, 0);
    const double tol = std::max(0.05 * std::abs(g), 3.0 * se);
    const bool ok = std::abs(g - a) <= tol;
    out << "t=" << fmt(t) << "  " << to_string(CovarianceRoute::GRADIENT_FORM) << " " << fmt(g) << "  "
        << to_string(CovarianceRoute::AUTOCORRELATION_FORM) << " " << fmt(a) << " ± " << fmt(se, 3) << "  "
        << (ok ? "PASS" : "FAIL") << '\n';
    verdicts.push_back({"mf_agree[t=" + fmt(t) + "]", ok, false, false, std::abs(g - a), tol,
                        "tail ratio " + fmt(ac.tail_ratio, 3)});
    doc["checks"].push_back({{"t", t},
                             {"gradient_form", g},
                             {"autocorrelation_form", a},
                             {"standard_error", se},
                             {"tolerance", tol},
                             {"passed", ok}});
  }
  const bool ok = std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
  doc["all_passed"] = ok;
  if (wants(c, "json")) write_text(dir / "report.json", doc.dump(2) + "\n");
  print_table(out, verdicts);
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? PASS : VERDICT_FAIL;
}

// -------------------------------------------------------------- experiment

ExperimentSpec experiment_spec(const RunConfig& c, const Pipeline& p) {
  ExperimentSpec spec;
  spec.kind = c.kind;
  spec.model = p.model;
  spec.f = p.f;
  spec.regime = c.regime;
  spec.policy = c.policy;
  if (c.invalid_theta) {
    SchedulePolicy bad = c.policy;
    bad.theta_step = *c.invalid_theta;
    spec.invalid_policy = bad;
  }
  spec.epsilons = c.epsilons;
  spec.horizon = c.horizon;
  spec.replicates = c.replicates;
  spec.mdp_levels = c.levels;
  spec.mdp_clt_sanity = c.mdp_clt_sanity;
  spec.master_seed = c.seed;
  spec.threads = c.threads;
  return spec;
}

void write_snapshots(const RunConfig& c, const Pipeline& p, const fs::path& dir, const Progress& progress) {
  for (std::size_t k = 0; k < c.epsilons.size(); ++k) {
    const auto schedule = StepSchedule::make_unchecked(c.regime, c.policy, c.epsilons[k]);
    std::ofstream csv(dir / ("snapshot_eps" + std::to_string(k) + ".csv"));
    SimulationOptions opts;
    opts.observer = csv_snapshot_sink(csv, p.model.dim_state, p.f.dim_out, c.snapshot_stride);
    RngStream rng(c.seed, derive_stream_id(stream_purpose::synthetic, k));
    try {
      simulate_euler(p.model, schedule, p.f, c.horizon, rng, opts);
    } catch (const TrajectoryExploded& e) {
      progress(std::string("snapshot path exploded: ") + e.what());
    }
  }
  progress("wrote " + std::to_string(c.epsilons.size()) + " snapshot path(s)");
}

int cmd_experiment(const RunConfig& c, const fs::path& dir, std::ostream& out, const Progress& progress) {
  const std::string started = utc_now("%Y-%m-%dT%H:%M:%SZ");
  const Pipeline p = build_pipeline(c, progress);
  if (p.model.dim_state == 1) {
    const auto probes = default_probe_grid(p.model);
    const ConditionReport conditions = validate_conditions(p.model, probes);
    for (const auto& check : conditions.checks)
      if (!check.passed && !check.waived) progress("warning: condition " + check.name + " fails: " + check.detail);
  }

  std::optional<PoissonStage> stage;
  double mf = 0.0;
  if (p.pi) {
    stage = solve_stage(c, p, progress);
    mf = average_mf(stage->curve, c.horizon);
    progress("M_f (gradient form, time average) = " + fmt(mf, 10));
    if (c.poisson_csv) {
      std::ofstream csv(dir / "poisson_solution.csv");
      write_poisson_csv(csv, stage->solutions.front());
    }
    std::ofstream js(dir / "covariance.json");
    write_covariance_json(js, stage->curve);
  }
  const bool needs_mf = c.kind == ExperimentKind::CLT_NORMALITY || c.kind == ExperimentKind::MDP_TAIL ||
                        c.kind == ExperimentKind::SCHEDULE_VIOLATION;
  if (needs_mf && !(mf > 0.0)) throw Error("cli", to_string(c.kind) + " needs a positive M_f target");

  const ExperimentSpec spec = experiment_spec(c, p);
  progress("running " + to_string(c.kind) + " with N = " + std::to_string(c.replicates) + " over " +
           std::to_string(c.epsilons.size()) + " epsilon(s), " + std::to_string(resolve_threads(c.threads)) +
           " thread(s)");
  ExperimentReport report;
  switch (c.kind) {
    case ExperimentKind::LLN_RATE: report = run_lln_rate(spec); break;
    case ExperimentKind::CLT_NORMALITY: report = run_clt_normality(spec, mf); break;
    case ExperimentKind::MDP_TAIL: {
      std::map<double, double> rate;
      for (double x : c.levels) rate[x] = mdp_rate_closed_form(x, c.horizon, mf);
      report = run_mdp_tail(spec, rate);
      break;
    }
    case ExperimentKind::SCHEDULE_VIOLATION: report = run_schedule_violation(spec, mf); break;
    case ExperimentKind::RIEMANN_VS_CONTINUOUS: report = run_riemann_vs_continuous(spec); break;
  }
  if (stage) report.fitted["mf_gradient_form"] = mf;
  if (c.snapshots) write_snapshots(c, p, dir, progress);

  const std::string finished = utc_now("%Y-%m-%dT%H:%M:%SZ");
  if (wants(c, "json"))
    write_text(dir / "report.json",
               report_to_json(report, config_to_json(c), {{"started", started}, {"finished", finished}}));
  if (wants(c, "csv")) {
    std::ofstream csv(dir / "summary.csv");
    write_summary_csv(csv, report);
  }
  for (const auto& flag : report.flags) progress("flag: " + flag);
  print_table(out, report.verdicts);
  const bool ok = report.all_passed();
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? PASS : VERDICT_FAIL;
}

// -------------------------------------------------------------------- rate

int cmd_rate(const RunConfig& c, const RunOptions& o, const fs::path& dir, std::ostream& out,
             const Progress& progress) {
  if (!o.knots) throw Error("cli", "rate needs --knots PATH");
  const RatePath path = read_knots(*o.knots);
  const Pipeline p = build_pipeline(c, progress);
  const PoissonStage s = solve_stage(c, p, progress);
  if (path.dim() != s.curve.dim())
    throw Error("cli", "knot path has dimension " + std::to_string(path.dim()) + " but M_f has dimension " +
                           std::to_string(s.curve.dim()));
  const double rate = rate_function(path, s.curve);
  json doc = base_document("rate", c);
  doc["knots"] = o.knots->string();
  doc["rate"] = rate;
  if (wants(c, "json")) write_text(dir / "report.json", doc.dump(2) + "\n");
  out << "I_f = " << std::setprecision(17) << rate << '\n';
  return PASS;
}

}  // namespace

RatePath read_knots(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cli", "cannot read knot file '" + path.string() + "'");
  std::vector<double> times;
  std::vector<Vector> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (...) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (times.empty() && line_no == 1) continue;  // header
      throw Error("cli", "knot file line " + std::to_string(line_no) + " is not numeric");
    }
    if (row.size() < 2) throw Error("cli", "knot file line " + std::to_string(line_no) + " needs t and xi columns");
    times.push_back(row[0]);
    values.push_back(Eigen::Map<const Vector>(row.data() + 1, static_cast<Eigen::Index>(row.size() - 1)));
    if (values.back().size() != values.front().size())
      throw Error("cli", "knot file line " + std::to_string(line_no) + " has a different dimension");
  }
  if (times.empty()) throw Error("cli", "knot file has no knots");
  // A single knot is the zero path on an empty interval.
  if (times.size() == 1) {
    if (times[0] != 0.0 || values[0].norm() != 0.0)
      throw Error("cli", "a single knot must be t = 0, xi = 0");
    return RatePath::make({0.0, 1.0}, {values[0], values[0]});
  }
  return RatePath::make(std::move(times), std::move(values));
}

RunOutcome run(const std::string& sub, const RunConfig& c, const RunOptions& o, std::ostream& out,
               std::ostream& log) {
  RunOutcome outcome;
  const Progress progress{log, o.quiet};
  static const std::vector<std::string> known{"validate", "poisson", "mf", "experiment", "rate"};
  if (std::find(known.begin(), known.end(), sub) == known.end()) {
    outcome.exit_code = USAGE_ERROR;
    outcome.message = "unknown subcommand '" + sub + "'";
    return outcome;
  }
  try {
    outcome.directory = make_run_directory(sub, c, o);
  } catch (const std::exception& e) {
    outcome.exit_code = RUNTIME_ERROR;
    outcome.message = std::string("cannot create run directory: ") + e.what();
    return outcome;
  }
  progress("run directory " + outcome.directory.string());
  write_text(outcome.directory / "config.ini", c.source);
  try {
    if (sub == "validate")
      outcome.exit_code = cmd_validate(c, outcome.directory, out, progress);
    else if (sub == "poisson")
      outcome.exit_code = cmd_poisson(c, outcome.directory, out, progress);
    else if (sub == "mf")
      outcome.exit_code = cmd_mf(c, outcome.directory, out, progress);
    else if (sub == "experiment")
      outcome.exit_code = cmd_experiment(c, outcome.directory, out, progress);
    else
      outcome.exit_code = cmd_rate(c, o, outcome.directory, out, progress);
  } catch (const std::exception& e) {
    outcome.exit_code = RUNTIME_ERROR;
    outcome.message = e.what();
    write_text(outcome.directory / "FAILED", outcome.message + "\n");
  }
  return outcome;
}

}  // namespace ergosim::cli
