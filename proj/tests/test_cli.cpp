#include "ergosim/cli.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace ergosim;
using namespace ergosim::cli;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(
[model]
family = OU
kappa = 1
mu = 0
sigma = 1.4142135623730951

[experiment]
kind = CLT_NORMALITY
epsilons = [0.005]
)";

bool mentions(const ParseResult& r, const std::string& needle) {
  for (const auto& e : r.errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ergosim_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig parse_ok(const std::string& text) {
  auto r = parse_config(text);
  EXPECT_TRUE(r.ok()) << (r.errors.empty() ? "" : r.errors.front());
  return *r.config;
}

}  // namespace

TEST(ParseConfig, MinimalOuFillsDefaults) {
  const auto c = parse_ok(kMinimal);
  EXPECT_EQ(c.replicates, 2000u);
  EXPECT_EQ(c.threads, 0u);
  EXPECT_EQ(c.regime, Regime::CLT);
  EXPECT_DOUBLE_EQ(c.policy.theta_step, 2.5);
  EXPECT_EQ(c.poly, (std::vector<double>{0, 1}));
}

TEST(ParseConfig, ThetaTooSmallForClt) {
  const auto r = parse_config(std::string(kMinimal) + "[schedule]\nregime = CLT\ntheta = 1.2\n");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r, "CLT requires theta > 1 + 1/nu = 2.0, got 1.2"));
  EXPECT_TRUE(mentions(r, "[schedule] theta"));
}

TEST(ParseConfig, NegativeEpsilon) {
  const auto r = parse_config("[experiment]\nepsilons = [0.01, -0.005]\n");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r, "[experiment] epsilons"));
}

TEST(ParseConfig, MdpWithoutLevels) {
  const auto r = parse_config("[experiment]\nkind = MDP_TAIL\nepsilons = [0.08, 0.04]\nN = 1000\n");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(mentions(r, "[experiment] levels"));
}

TEST(ParseConfig, UnknownKeyNamesSection) {
  const auto r = parse_config("[model]\nfamily = OU\ncolour = red\n");
  EXPECT_TRUE(mentions(r, "unknown key 'colour' in section [model]"));
}

TEST(ParseConfig, AllErrorsReported) {
  const auto r = parse_config("[model]\nfamily = nope\n[experiment]\nN = abc\nT = -1\n[run]\nthreads = many\n");
  EXPECT_GE(r.errors.size(), 4u);
}

TEST(ParseConfig, RegimeMismatch) {
  const auto r = parse_config("[schedule]\nregime = MDP\n[experiment]\nkind = LLN_RATE\nepsilons = [0.08, 0.04, 0.02]\n");
  EXPECT_TRUE(mentions(r, "[schedule] regime"));
}

TEST(ParseConfig, ThreadsAutoAndExplicit) {
  EXPECT_EQ(parse_ok(std::string(kMinimal) + "[run]\nthreads = auto\n").threads, 0u);
  EXPECT_EQ(parse_ok(std::string(kMinimal) + "[run]\nthreads = 3\nseed = 77\n").threads, 3u);
}

TEST(ParseConfig, CustomModel) {
  const auto c = parse_ok("[model]\nfamily = custom\ndrift = [0, -1, 0, -1]\ndiffusion = [1]\nalpha = 3\n");
  const auto m = build_model(c);
  EXPECT_DOUBLE_EQ(m.drift1(2.0), -10.0);
  EXPECT_EQ(m.recurrence_alpha, 3.0);
  EXPECT_EQ(m.lambda1, 1.0);
}

TEST(ParseConfig, FellerViolationReported) {
  const auto r = parse_config("[model]\nfamily = CIR\nkappa = 1\nmu = 0.25\nsigma = 1\n");
  EXPECT_TRUE(mentions(r, "Feller"));
}

TEST(ParseConfig, MalformedInputNeverThrows) {
  std::mt19937 gen(1);
  const std::string alphabet = "[]=#,.-+eE0123456789 abcdefghijklmnopqrstuvwxyz_\n\t";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const int len = static_cast<int>(gen() % 200);
    for (int i = 0; i < len; ++i) text += alphabet[pick(gen)];
    ParseResult r;
    ASSERT_NO_THROW(r = parse_config(text)) << text;
    for (const auto& e : r.errors) EXPECT_FALSE(e.empty());
  }
}

TEST(ParseConfig, EveryRejectionNamesAKey) {
  for (const char* text : {"[experiment]\nN = 0.5\n", "[mf]\nfine_step = -1\n", "[output]\nformats = [xml]\n",
                           "[poisson]\ngrid_lo = 3\ngrid_hi = 1\n"}) {
    const auto r = parse_config(text);
    ASSERT_FALSE(r.ok()) << text;
    for (const auto& e : r.errors) EXPECT_NE(e.find('['), std::string::npos) << e;
  }
}

TEST(Run, CltExperimentPassesAndIsReproducible) {
  const auto dir = scratch("clt");
  auto c = parse_ok(kMinimal);
  c.epsilons = {0.02};
  c.replicates = 500;
  std::ostringstream out, log;
  RunOptions o;
  o.out_root = dir;
  o.quiet = true;
  o.run_name = "first";
  const auto a = run("experiment", c, o, out, log);
  EXPECT_EQ(a.exit_code, PASS) << out.str() << a.message;
  EXPECT_TRUE(fs::exists(a.directory / "report.json"));
  EXPECT_TRUE(fs::exists(a.directory / "summary.csv"));
  EXPECT_TRUE(fs::exists(a.directory / "poisson_solution.csv"));
  EXPECT_NE(out.str().find("clt_variance"), std::string::npos);

  o.run_name = "second";
  c.threads = 3;
  const auto b = run("experiment", c, o, out, log);
  auto ja = nlohmann::json::parse(read(a.directory / "report.json"));
  auto jb = nlohmann::json::parse(read(b.directory / "report.json"));
  EXPECT_TRUE(ja["all_passed"].get<bool>());
  ja["provenance"].erase("timestamps");
  jb["provenance"].erase("timestamps");
  EXPECT_EQ(ja.dump(), jb.dump());
  fs::remove_all(dir);
}

TEST(Run, MfPrintsBothRoutes) {
  const auto dir = scratch("mf");
  const auto c = parse_ok(kMinimal);
  std::ostringstream out, log;
  RunOptions o;
  o.out_root = dir;
  o.quiet = true;
  const auto r = run("mf", c, o, out, log);
  EXPECT_EQ(r.exit_code, PASS) << out.str();
  EXPECT_NE(out.str().find("GRADIENT_FORM 2 "), std::string::npos) << out.str();
  EXPECT_NE(out.str().find("AUTOCORRELATION_FORM"), std::string::npos);
  EXPECT_NE(out.str().find("PASS"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Run, RateOnSingleZeroKnot) {
  const auto dir = scratch("rate");
  fs::create_directories(dir);
  {
    std::ofstream k(dir / "knots.csv");
    k << "t,xi_1\n0,0\n";
  }
  std::ostringstream out, log;
  RunOptions o;
  o.out_root = dir;
  o.quiet = true;
  o.knots = dir / "knots.csv";
  const auto r = run("rate", parse_ok(kMinimal), o, out, log);
  EXPECT_EQ(r.exit_code, PASS) << r.message;
  EXPECT_EQ(out.str(), "I_f = 0\n");
  fs::remove_all(dir);
}

TEST(Run, ValidateSignFlippedDrift) {
  const auto dir = scratch("validate");
  const auto c = parse_ok("[model]\nfamily = custom\ndrift = [0, 1]\ndiffusion = [1.4142135623730951]\n");
  std::ostringstream out, log;
  RunOptions o;
  o.out_root = dir;
  o.quiet = true;
  const auto r = run("validate", c, o, out, log);
  EXPECT_EQ(r.exit_code, VERDICT_FAIL);
  EXPECT_NE(out.str().find("recurrence                  FAIL"), std::string::npos) << out.str();
  fs::remove_all(dir);
}

TEST(Run, RuntimeErrorLeavesFailedMarker) {
  const auto dir = scratch("failed");
  const auto c = parse_ok("[model]\nfamily = custom\ndrift = [0, 1]\ndiffusion = [1]\n");
  std::ostringstream out, log;
  RunOptions o;
  o.out_root = dir;
  o.quiet = true;
  const auto r = run("experiment", c, o, out, log);
  EXPECT_EQ(r.exit_code, RUNTIME_ERROR);
  EXPECT_TRUE(fs::exists(r.directory / "FAILED"));
  EXPECT_NE(read(r.directory / "FAILED").find("density:"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Run, PoissonExport) {
  const auto dir = scratch("poisson");
  std::ostringstream out, log;
  RunOptions o;
  o.out_root = dir;
  o.quiet = true;
  const auto r = run("poisson", parse_ok(kMinimal), o, out, log);
  EXPECT_EQ(r.exit_code, PASS);
  const std::string csv = read(r.directory / "poisson_solution.csv");
  EXPECT_EQ(csv.rfind("x,u_1,u_prime_1,u_dprime_1\n", 0), 0u);
  EXPECT_NE(out.str().find("MDP exponent assumption: satisfied"), std::string::npos) << out.str();
  fs::remove_all(dir);
}

TEST(Run, UnknownSubcommand) {
  std::ostringstream out, log;
  EXPECT_EQ(run("plot", parse_ok(kMinimal), RunOptions{}, out, log).exit_code, USAGE_ERROR);
}

TEST(ReadKnots, HeaderOptionalAndValidated) {
  const auto dir = scratch("knots");
  fs::create_directories(dir);
  {
    std::ofstream k(dir / "a.csv");
    k << "0,0\n0.5,1\n1,0.5\n";
  }
  const auto p = read_knots(dir / "a.csv");
  EXPECT_EQ(p.times().size(), 3u);
  {
    std::ofstream k(dir / "b.csv");
    k << "t,xi_1\n0,0\nbad,row\n";
  }
  EXPECT_THROW(read_knots(dir / "b.csv"), std::exception);
  fs::remove_all(dir);
}
