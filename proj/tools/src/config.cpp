#include "ergosim/cli.hpp"

#include "ergosim/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace ergosim::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

std::optional<std::vector<std::string>> to_list(const std::string& s) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') return std::nullopt;
  std::vector<std::string> items;
  const std::string body = trim(s.substr(1, s.size() - 2));
  if (body.empty()) return items;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

struct Entry {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, Entry>;

class Reader {
 public:
  Reader(std::map<std::string, Section>& sections, std::vector<std::string>& errors)
      : sections_(sections), errors_(errors) {}

  const Entry* find(const std::string& section, const std::string& key) {
    seen_.insert(section + "." + key);
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  void number(const std::string& section, const std::string& key, double& out) {
    if (const Entry* e = find(section, key)) {
      if (auto v = to_number(e->value))
        out = *v;
      else
        fail(section, key, e, "expected a number, got '" + e->value + "'");
    }
  }

  void number(const std::string& section, const std::string& key, std::optional<double>& out) {
    if (const Entry* e = find(section, key)) {
      if (auto v = to_number(e->value))
        out = *v;
      else
        fail(section, key, e, "expected a number, got '" + e->value + "'");
    }
  }

  template <class Int>
  void integer(const std::string& section, const std::string& key, Int& out, double min_value) {
    if (const Entry* e = find(section, key)) {
      auto v = to_number(e->value);
      if (!v || *v != std::floor(*v) || *v < min_value || *v > 1.8e19)
        fail(section, key, e, "expected an integer >= " + std::to_string(static_cast<long long>(min_value)) +
                                  ", got '" + e->value + "'");
      else
        out = static_cast<Int>(*v);
    }
  }

  void boolean(const std::string& section, const std::string& key, bool& out) {
    if (const Entry* e = find(section, key)) {
      const std::string v = lower(e->value);
      if (v == "true" || v == "yes" || v == "1")
        out = true;
      else if (v == "false" || v == "no" || v == "0")
        out = false;
      else
        fail(section, key, e, "expected true or false, got '" + e->value + "'");
    }
  }

  void text(const std::string& section, const std::string& key, std::string& out) {
    if (const Entry* e = find(section, key)) out = e->value;
  }

  void numbers(const std::string& section, const std::string& key, std::vector<double>& out) {
    if (const Entry* e = find(section, key)) {
      auto items = to_list(e->value);
      if (!items) {
        // A bare scalar is a one-element list.
        if (auto v = to_number(e->value)) {
          out = {*v};
          return;
        }
        fail(section, key, e, "expected a list like [1, 2], got '" + e->value + "'");
        return;
      }
      std::vector<double> v;
      for (const auto& item : *items) {
        auto x = to_number(item);
        if (!x) {
          fail(section, key, e, "list element '" + item + "' is not a number");
          return;
        }
        v.push_back(*x);
      }
      out = std::move(v);
    }
  }

  void words(const std::string& section, const std::string& key, std::vector<std::string>& out) {
    if (const Entry* e = find(section, key)) {
      if (auto items = to_list(e->value))
        out = *items;
      else
        out = {e->value};
    }
  }

  void fail(const std::string& section, const std::string& key, const Entry* e, const std::string& what) {
    errors_.push_back("[" + section + "] " + key + (e ? " (line " + std::to_string(e->line) + ")" : "") +
                      ": " + what);
  }

  void reject_unknown() {
    for (const auto& [name, section] : sections_)
      for (const auto& [key, entry] : section)
        if (!seen_.count(name + "." + key))
          errors_.push_back("unknown key '" + key + "' in section [" + name + "] (line " +
                            std::to_string(entry.line) + ")");
  }

 private:
  std::map<std::string, Section>& sections_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

const std::set<std::string> kSections = {"model", "functional", "schedule", "experiment",
                                         "output", "run", "poisson", "mf"};

Regime default_regime(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::LLN_RATE: return Regime::LLN;
    case ExperimentKind::MDP_TAIL: return Regime::MDP;
    default: return Regime::CLT;
  }
}

}  // namespace

SdeModel build_model(const RunConfig& c) {
  if (lower(c.family) == "custom") {
    SdeModel m = polynomial_model({c.custom_drift}, {c.custom_diffusion});
    const auto get = [&](const std::string& k, double fallback) {
      auto it = c.declared.find(k);
      return it == c.declared.end() ? fallback : it->second;
    };
    m.recurrence_alpha = get("alpha", 1.0);
    m.recurrence_gamma = get("gamma", 1.0);
    m.recurrence_radius = get("radius", 0.0);
    // Constant diffusion c0 pins both ellipticity bounds at c0^2.
    const double a0 = m.constant_diffusion && !c.custom_diffusion.empty()
                          ? c.custom_diffusion[0] * c.custom_diffusion[0]
                          : 1.0;
    m.lambda1 = get("lambda1", a0);
    m.lambda2 = get("lambda2", a0);
    m.holder_nu = get("nu", 1.0);
    m.drift_growth_alpha_bar = get("alpha_bar", std::min(1.0, m.recurrence_alpha));
    m.support = {get("support_lo", -INFINITY), get("support_hi", INFINITY)};
    m.initial_state = Vector::Constant(1, get("x0", 0.0));
    for (const auto& [k, v] : c.declared) m.params[k] = v;
    return m;
  }
  auto fam = parse_model_family(c.family);
  if (!fam) throw Error("cli", "unknown model family '" + c.family + "'");
  return builtin_model(*fam, c.model_params);
}

FunctionalSpec build_functional(const RunConfig& c) {
  std::optional<TimeModulation> mod;
  if (c.modulation_amplitude != 0.0) mod = TimeModulation{c.modulation_amplitude, c.modulation_frequency};
  return polynomial_functional({c.poly}, mod);
}

ParseResult parse_config(const std::string& text) {
  ParseResult result;
  std::map<std::string, Section> sections;
  std::string current;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      current = lower(trim(line.substr(1, line.size() - 2)));
      if (!kSections.count(current))
        result.errors.push_back("unknown section [" + current + "] (line " + std::to_string(line_no) + ")");
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      result.errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
      continue;
    }
    if (current.empty()) {
      result.errors.push_back("line " + std::to_string(line_no) + ": key outside any [section]");
      continue;
    }
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      result.errors.push_back("line " + std::to_string(line_no) + ": empty key");
      continue;
    }
    if (sections[current].count(key))
      result.errors.push_back("[" + current + "] " + key + " (line " + std::to_string(line_no) + "): duplicate key");
    sections[current][key] = {value, line_no};
  }

  RunConfig c;
  c.source = text;
  std::vector<std::string>& errors = result.errors;
  Reader r(sections, errors);

  // [model]
  const std::size_t errors_before_model = errors.size();
  r.text("model", "family", c.family);
  const bool custom = lower(c.family) == "custom";
  for (const char* k : {"kappa", "mu", "sigma", "alpha", "x0"}) {
    if (custom && std::string(k) != "alpha" && std::string(k) != "x0") continue;
    double v = 0.0;
    if (r.find("model", k)) {
      r.number("model", k, v);
      (custom ? c.declared : c.model_params)[k] = v;
    }
  }
  if (custom) {
    r.numbers("model", "drift", c.custom_drift);
    r.numbers("model", "diffusion", c.custom_diffusion);
    for (const char* k : {"gamma", "radius", "lambda1", "lambda2", "nu", "alpha_bar", "support_lo", "support_hi"}) {
      if (r.find("model", k)) {
        double v = 0.0;
        r.number("model", k, v);
        c.declared[k] = v;
      }
    }
    if (c.custom_drift.empty()) errors.push_back("[model] drift: custom models need a drift coefficient list");
    if (c.custom_diffusion.empty())
      errors.push_back("[model] diffusion: custom models need a diffusion coefficient list");
  } else if (!parse_model_family(c.family)) {
    errors.push_back("[model] family: unknown family '" + c.family +
                     "' (expected OU, CIR, GOMPERTZ, POWER_DRIFT or custom)");
  }

  const bool model_ok = errors.size() == errors_before_model;

  // [functional]
  r.numbers("functional", "poly", c.poly);
  r.number("functional", "modulation_amplitude", c.modulation_amplitude);
  r.number("functional", "modulation_frequency", c.modulation_frequency);
  r.boolean("functional", "centralize", c.centralize);
  if (c.poly.empty()) errors.push_back("[functional] poly: coefficient list is empty");

  // [experiment]
  if (const Entry* e = r.find("experiment", "kind")) {
    if (auto k = parse_experiment_kind(e->value))
      c.kind = *k;
    else
      r.fail("experiment", "kind", e, "unknown experiment kind '" + e->value + "'");
  }
  r.numbers("experiment", "epsilons", c.epsilons);
  r.number("experiment", "t", c.horizon);
  r.integer("experiment", "n", c.replicates, 2);
  r.numbers("experiment", "levels", c.levels);
  r.boolean("experiment", "mdp_clt_sanity", c.mdp_clt_sanity);
  for (std::size_t k = 0; k < c.epsilons.size(); ++k) {
    if (!(c.epsilons[k] > 0.0))
      errors.push_back("[experiment] epsilons: must be positive, got " + std::to_string(c.epsilons[k]));
    else if (k > 0 && !(c.epsilons[k] < c.epsilons[k - 1]))
      errors.push_back("[experiment] epsilons: must be strictly decreasing");
  }
  if (c.epsilons.empty()) errors.push_back("[experiment] epsilons: list is empty");
  if (!(c.horizon > 0.0)) errors.push_back("[experiment] T: must be positive");
  if (c.kind == ExperimentKind::MDP_TAIL && c.levels.empty())
    errors.push_back("[experiment] levels: MDP_TAIL needs at least one level");
  for (double x : c.levels)
    if (!(x >= 0.0)) errors.push_back("[experiment] levels: must be nonnegative");
  const bool heavy = c.kind == ExperimentKind::CLT_NORMALITY || c.kind == ExperimentKind::MDP_TAIL ||
                     c.kind == ExperimentKind::SCHEDULE_VIOLATION;
  if (heavy && c.replicates < 100) errors.push_back("[experiment] N: must be at least 100 for " + to_string(c.kind));
  if ((c.kind == ExperimentKind::LLN_RATE || c.kind == ExperimentKind::RIEMANN_VS_CONTINUOUS) &&
      c.epsilons.size() < 3)
    errors.push_back("[experiment] epsilons: need >= 3 epsilons for slope fit");

  // [schedule]
  c.regime = default_regime(c.kind);
  if (const Entry* e = r.find("schedule", "regime")) {
    if (auto reg = parse_regime(e->value)) {
      if (*reg != default_regime(c.kind))
        r.fail("schedule", "regime", e,
               "regime " + e->value + " does not match experiment kind " + to_string(c.kind) +
                   " (expected " + to_string(default_regime(c.kind)) + ")");
      c.regime = *reg;
    } else {
      r.fail("schedule", "regime", e, "unknown regime '" + e->value + "' (expected LLN, CLT or MDP)");
    }
  }
  if (c.regime == Regime::LLN) c.policy.theta_step = 1.5;
  r.number("schedule", "theta", c.policy.theta_step);
  r.number("schedule", "c_step", c.policy.c_step);
  r.number("schedule", "gamma_delta", c.policy.gamma_mdp);
  r.number("schedule", "invalid_theta", c.invalid_theta);
  if (c.kind == ExperimentKind::SCHEDULE_VIOLATION && !c.invalid_theta) c.invalid_theta = 1.0;

  // [output]
  r.text("output", "directory", c.directory);
  r.words("output", "formats", c.formats);
  r.boolean("output", "poisson_csv", c.poisson_csv);
  r.boolean("output", "snapshots", c.snapshots);
  r.integer("output", "snapshot_stride", c.snapshot_stride, 1);
  for (const auto& f : c.formats)
    if (f != "json" && f != "csv") errors.push_back("[output] formats: unknown format '" + f + "'");

  // [run]
  r.integer("run", "seed", c.seed, 0);
  if (const Entry* e = r.find("run", "threads")) {
    if (lower(e->value) == "auto") {
      c.threads = 0;
    } else {
      auto v = to_number(e->value);
      if (!v || *v < 1 || *v != std::floor(*v) || *v > 4096)
        r.fail("run", "threads", e, "expected a positive integer or 'auto', got '" + e->value + "'");
      else
        c.threads = static_cast<unsigned>(*v);
    }
  }

  // [poisson]
  r.number("poisson", "grid_lo", c.grid_lo);
  r.number("poisson", "grid_hi", c.grid_hi);
  r.integer("poisson", "grid_points", c.grid_points, 3);
  r.number("poisson", "tail_fraction", c.tail_fraction);
  r.number("poisson", "audit_slack", c.audit_slack);
  if (c.grid_lo && c.grid_hi && !(*c.grid_lo < *c.grid_hi))
    errors.push_back("[poisson] grid_lo: must be below grid_hi");
  if (!(c.tail_fraction > 0.0 && c.tail_fraction <= 0.5))
    errors.push_back("[poisson] tail_fraction: must lie in (0, 0.5]");

  // [mf]
  r.number("mf", "horizon_s", c.mf_horizon_s);
  r.integer("mf", "n_paths", c.mf_paths, 32);
  r.number("mf", "fine_step", c.mf_fine_step);
  r.integer("mf", "time_slices", c.mf_time_slices, 2);
  if (!(c.mf_horizon_s > 0.0)) errors.push_back("[mf] horizon_s: must be positive");
  if (!(c.mf_fine_step > 0.0)) errors.push_back("[mf] fine_step: must be positive");

  r.reject_unknown();

  // Cross-field checks need the model's Hoelder exponent.
  if (model_ok) {
    try {
      const SdeModel m = build_model(c);
      if (auto why = schedule_violation(c.regime, c.policy, m.holder_nu))
        errors.push_back("[schedule] theta: " + *why);
    } catch (const std::exception& e) {
      errors.push_back(std::string("[model] parameters: ") + e.what());
    }
  }
  if (errors.empty()) result.config = std::move(c);
  return result;
}

ParseResult parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    ParseResult r;
    r.errors.push_back("cannot read config file '" + path.string() + "'");
    return r;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  using nlohmann::json;
  json j;
  j["model"] = {{"family", c.family}, {"params", c.model_params}};
  if (lower(c.family) == "custom")
    j["model"]["custom"] = {{"drift", c.custom_drift}, {"diffusion", c.custom_diffusion}, {"declared", c.declared}};
  j["functional"] = {{"poly", c.poly},
                     {"modulation_amplitude", c.modulation_amplitude},
                     {"modulation_frequency", c.modulation_frequency},
                     {"centralize", c.centralize}};
  j["schedule"] = {{"regime", to_string(c.regime)},
                   {"theta", c.policy.theta_step},
                   {"c_step", c.policy.c_step},
                   {"gamma_delta", c.policy.gamma_mdp}};
  if (c.invalid_theta) j["schedule"]["invalid_theta"] = *c.invalid_theta;
  j["experiment"] = {{"kind", to_string(c.kind)},
                     {"epsilons", c.epsilons},
                     {"T", c.horizon},
                     {"N", c.replicates},
                     {"levels", c.levels},
                     {"mdp_clt_sanity", c.mdp_clt_sanity}};
  j["output"] = {{"formats", c.formats},
                 {"poisson_csv", c.poisson_csv},
                 {"snapshots", c.snapshots},
                 {"snapshot_stride", c.snapshot_stride}};
  j["run"] = {{"seed", c.seed}};
  j["poisson"] = {{"grid_points", c.grid_points},
                  {"tail_fraction", c.tail_fraction},
                  {"audit_slack", c.audit_slack}};
  if (c.grid_lo) j["poisson"]["grid_lo"] = *c.grid_lo;
  if (c.grid_hi) j["poisson"]["grid_hi"] = *c.grid_hi;
  j["mf"] = {{"horizon_s", c.mf_horizon_s},
             {"n_paths", c.mf_paths},
             {"fine_step", c.mf_fine_step},
             {"time_slices", c.mf_time_slices}};
  return j.dump();
}

}  // namespace ergosim::cli
