#pragma once

#include "ergosim/euler.hpp"
#include "ergosim/functional.hpp"
#include "ergosim/harness.hpp"
#include "ergosim/model.hpp"
#include "ergosim/variance.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ergosim::cli {

/// Resolved contents of a run configuration file.
///
/// Grammar: one `key = value` per line inside `[section]` blocks; `#` starts
/// a comment; arrays are written `[a, b, c]`; strings are bare words.
/// Sections: model, functional, schedule, experiment, output, run, poisson, mf.
struct RunConfig {
  // [model]
  std::string family = "OU";  // OU | CIR | GOMPERTZ | POWER_DRIFT | custom
  std::map<std::string, double> model_params;
  std::vector<double> custom_drift;
  std::vector<double> custom_diffusion;
  std::map<std::string, double> declared;  // custom regularity metadata

  // [functional]
  std::vector<double> poly{0.0, 1.0};
  double modulation_amplitude = 0.0;
  double modulation_frequency = 0.0;
  bool centralize = true;

  // [schedule]
  Regime regime = Regime::CLT;
  SchedulePolicy policy;
  std::optional<double> invalid_theta;

  // [experiment]
  ExperimentKind kind = ExperimentKind::CLT_NORMALITY;
  std::vector<double> epsilons{0.005};
  double horizon = 1.0;
  std::size_t replicates = 2000;
  std::vector<double> levels;
  bool mdp_clt_sanity = false;  // MDP_TAIL with delta(eps) = sqrt(eps)

  // [output]
  std::string directory = "runs";
  std::vector<std::string> formats{"json", "csv"};
  bool poisson_csv = true;
  bool snapshots = false;
  std::int64_t snapshot_stride = 1000;

  // [run]
  std::uint64_t seed = 20240601;
  unsigned threads = 0;  // 0 = auto

  // [poisson]
  /// Defaults to the pi-quantiles 1e-10 and 1 - 1e-10.
  std::optional<double> grid_lo;
  std::optional<double> grid_hi;
  std::size_t grid_points = 641;
  double tail_fraction = 0.25;
  double audit_slack = 0.1;

  // [mf]
  double mf_horizon_s = 10.0;
  std::size_t mf_paths = 100000;
  double mf_fine_step = 0.01;
  std::size_t mf_time_slices = 11;

  /// Text the config was parsed from.
  std::string source;
};

struct ParseResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;
  bool ok() const { return config.has_value() && errors.empty(); }
};

/// Parses and validates config text; every problem is reported, not just the
/// first.
ParseResult parse_config(const std::string& text);
ParseResult parse_config_file(const std::filesystem::path& path);

/// Fully resolved configuration as JSON text; excludes the thread count.
std::string config_to_json(const RunConfig& config);

SdeModel build_model(const RunConfig& config);
FunctionalSpec build_functional(const RunConfig& config);

enum ExitCode { PASS = 0, VERDICT_FAIL = 1, USAGE_ERROR = 2, RUNTIME_ERROR = 3 };

struct RunOptions {
  std::filesystem::path out_root;  // overrides config directory when nonempty
  bool quiet = false;
  std::optional<std::filesystem::path> knots;  // `rate` input
  /// Fixed run directory name instead of a timestamp (used by tests).
  std::optional<std::string> run_name;
};

struct RunOutcome {
  int exit_code = PASS;
  std::filesystem::path directory;
  std::string message;
};

/// Executes one subcommand: validate, poisson, mf, experiment, rate.
/// Artifacts go to a timestamped directory; a FAILED marker is written when
/// the pipeline throws.
RunOutcome run(const std::string& subcommand, const RunConfig& config, const RunOptions& options,
               std::ostream& out, std::ostream& log);

/// Knot CSV with columns t,xi_1..xi_n; a header line is optional.
RatePath read_knots(const std::filesystem::path& path);

}  // namespace ergosim::cli
