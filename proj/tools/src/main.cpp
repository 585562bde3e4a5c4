#include "ergosim/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace ergosim::cli;
  CLI::App app{"ergosim: scaled Euler-Maruyama estimators for ergodic diffusions"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> threads;
  std::string out_dir;
  bool quiet = false;
  std::string knots;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads or 'auto' (overrides the config)");
    sub->add_option("--out", out_dir, "Output root directory (overrides the config)");
    sub->add_flag("--quiet", quiet, "Suppress the progress log");
  };
  add_common(app.add_subcommand("validate", "Check the model regularity conditions"));
  add_common(app.add_subcommand("poisson", "Solve the Poisson equation and export the solution"));
  add_common(app.add_subcommand("mf", "Compute M_f by both routes and cross-check them"));
  add_common(app.add_subcommand("experiment", "Run the configured experiment"));
  auto* rate = app.add_subcommand("rate", "Evaluate the rate function on a knot file");
  add_common(rate);
  rate->add_option("--knots", knots, "CSV with columns t,xi_1..xi_n")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? PASS : USAGE_ERROR;
  }

  ParseResult parsed = parse_config_file(config_path);
  if (!parsed.ok()) {
    for (const auto& e : parsed.errors) std::cerr << "config error: " << e << '\n';
    return USAGE_ERROR;
  }
  RunConfig config = *parsed.config;
  if (seed) config.seed = *seed;
  if (threads) {
    if (*threads == "auto") {
      config.threads = 0;
    } else {
      try {
        const long v = std::stol(*threads);
        if (v < 1) throw std::invalid_argument("threads");
        config.threads = static_cast<unsigned>(v);
      } catch (const std::exception&) {
        std::cerr << "--threads: expected a positive integer or 'auto'\n";
        return USAGE_ERROR;
      }
    }
  }

  RunOptions options;
  options.out_root = out_dir;
  options.quiet = quiet;
  if (!knots.empty()) options.knots = knots;

  const auto* sub = app.get_subcommands().front();
  const RunOutcome outcome = run(sub->get_name(), config, options, std::cout, std::cerr);
  if (!outcome.message.empty()) std::cerr << "error: " << outcome.message << '\n';
  if (!outcome.directory.empty() && !quiet) std::cerr << "artifacts in " << outcome.directory.string() << '\n';
  return outcome.exit_code;
}
