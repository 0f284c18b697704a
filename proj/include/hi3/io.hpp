#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "hi3/calibration.hpp"
#include "hi3/decision.hpp"
#include "hi3/mtd.hpp"
#include "hi3/params.hpp"
#include "hi3/prior.hpp"
#include "hi3/simulate.hpp"

namespace hi3 {

using json = nlohmann::json;

/// Filesystem failure; front ends map it to exit code 3.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;
inline constexpr std::uint64_t kDefaultSeed = 1;

// ---------------------------------------------------------------- formatting

inline std::string fixed4(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// Shortest text that parses back to the same double.
inline std::string exact(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  for (int prec = 1; prec < 17; ++prec) {
    char trial[64];
    std::snprintf(trial, sizeof trial, "%.*g", prec, v);
    if (std::strtod(trial, nullptr) == v) return trial;
  }
  return buf;
}

inline double parse_double(const std::string& s, const std::string& field) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw validation_error(field, field + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw validation_error(field, field + ": not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---------------------------------------------------------------- files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw io_error("cannot read " + path.string());
  return ss.str();
}

/// Write through a temporary sibling and rename, so readers never observe a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw io_error("cannot write " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw io_error("cannot rename into " + path.string());
  }
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw io_error("cannot create directory " + dir.string());
}

// ---------------------------------------------------------------- json reading

namespace detail {

inline std::string join_field(std::string_view parent, std::string_view key) {
  return parent.empty() ? std::string(key) : std::string(parent) + "." + std::string(key);
}

inline void require_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw validation_error(field.empty() ? "config" : field, "expected a JSON object");
}

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw validation_error(join_field(where, key), "unknown key '" + key + "'");
  }
}

inline double as_number(const json& j, const std::string& field) {
  if (!j.is_number()) throw validation_error(field, field + ": expected a number");
  return j.get<double>();
}

inline std::int64_t as_integer(const json& j, const std::string& field) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::nearbyint(v) == v && std::fabs(v) < 9e15) return static_cast<std::int64_t>(v);
  }
  throw validation_error(field, field + ": expected an integer");
}

inline std::uint64_t as_unsigned(const json& j, const std::string& field) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const auto v = as_integer(j, field);
  if (v < 0) throw validation_error(field, field + ": expected a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

inline std::vector<double> as_numbers(const json& j, const std::string& field) {
  if (!j.is_array()) throw validation_error(field, field + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], field + "[" + std::to_string(i + 1) + "]"));
  return out;
}

inline std::vector<int> as_counts(const json& j, const std::string& field) {
  if (!j.is_array()) throw validation_error(field, field + ": expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string f = field + "[" + std::to_string(i + 1) + "]";
    const auto v = as_integer(j[i], f);
    if (v < 0 || v > std::numeric_limits<int>::max()) throw validation_error(f, f + ": count out of range");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

inline int as_int(const json& j, const std::string& field) {
  const auto v = as_integer(j, field);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw validation_error(field, field + ": integer out of range");
  return static_cast<int>(v);
}

/// JSON has no infinity; K is written as "inf" when unbounded.
inline double as_extended(const json& j, const std::string& field) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity" || s == "Inf") return std::numeric_limits<double>::infinity();
    throw validation_error(field, field + ": expected a number or \"inf\"");
  }
  return as_number(j, field);
}

inline json extended_to_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

inline json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace detail

inline std::optional<Design> parse_design_name(std::string_view s) {
  if (s == "hi3+3" || s == "hi3" || s == "Hi3+3") return Design::Hi3;
  if (s == "i3+3" || s == "i3" || s == "I3+3") return Design::I3;
  return std::nullopt;
}

inline std::vector<Design> parse_design_list(std::string_view text) {
  std::vector<Design> out;
  for (const auto& item : split(text, ',')) {
    const auto d = parse_design_name(item);
    if (!d) throw validation_error("designs", "unknown design '" + item + "' (expected hi3+3 or i3+3)");
    if (std::find(out.begin(), out.end(), *d) == out.end()) out.push_back(*d);
  }
  if (out.empty()) throw validation_error("designs", "no designs given");
  return out;
}

inline std::vector<int> parse_size_list(std::string_view text) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) {
    const double v = parse_double(item, "sizes");
    if (!(v >= 1.0) || std::nearbyint(v) != v || v > 1e6)
      throw validation_error("sizes", "sample sizes must be positive integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

inline DesignParams design_from_json(const json& j, DesignParams dp = {}) {
  detail::require_object(j, "design");
  detail::reject_unknown(j, {"p_target", "eps1", "eps2", "xi", "a0", "b0", "alpha", "K", "cohort_size", "max_n",
                             "table_cap"},
                         "design");
  auto num = [&](const char* key, double& slot) {
    if (j.contains(key)) slot = detail::as_number(j.at(key), std::string("design.") + key);
  };
  auto integer = [&](const char* key, int& slot) {
    if (j.contains(key)) slot = detail::as_int(j.at(key), std::string("design.") + key);
  };
  num("p_target", dp.p_target);
  num("eps1", dp.eps1);
  num("eps2", dp.eps2);
  num("xi", dp.xi);
  num("a0", dp.a0);
  num("b0", dp.b0);
  num("alpha", dp.alpha);
  if (j.contains("K")) dp.ess_cap = detail::as_extended(j.at("K"), "design.K");
  integer("cohort_size", dp.cohort_size);
  integer("max_n", dp.max_n);
  integer("table_cap", dp.table_cap);
  try {
    dp.validate();
  } catch (const validation_error& e) {
    throw validation_error("design." + e.field(), e.what());
  }
  return dp;
}

inline HistoricalData history_from_json(const json& j) {
  detail::require_object(j, "history");
  detail::reject_unknown(j, {"x", "n"}, "history");
  if (!j.contains("x") || !j.contains("n")) throw validation_error("history", "history needs both x and n");
  HistoricalData h{detail::as_numbers(j.at("x"), "history.x"), detail::as_numbers(j.at("n"), "history.n")};
  h.validate();
  return h;
}

/// Trial state with one-based current_dose.
inline TrialState state_from_json(const json& j) {
  detail::require_object(j, "state");
  detail::reject_unknown(j, {"current_dose", "x", "n", "excluded", "terminated"}, "state");
  if (!j.contains("x") || !j.contains("n") || !j.contains("current_dose"))
    throw validation_error("state", "state needs current_dose, x and n");
  TrialState s;
  s.dlt = detail::as_counts(j.at("x"), "state.x");
  s.patients = detail::as_counts(j.at("n"), "state.n");
  if (s.dlt.size() != s.patients.size()) throw validation_error("state", "state x and n lengths differ");
  const auto dose = detail::as_integer(j.at("current_dose"), "state.current_dose");
  if (dose < 1 || static_cast<std::size_t>(dose) > s.patients.size())
    throw validation_error("state.current_dose", "current_dose must lie in 1..D");
  s.current = static_cast<std::size_t>(dose - 1);
  s.excluded.assign(s.patients.size(), false);
  if (j.contains("excluded")) {
    const auto& e = j.at("excluded");
    if (!e.is_array() || e.size() != s.patients.size())
      throw validation_error("state.excluded", "excluded must be a boolean array of length D");
    for (std::size_t d = 0; d < e.size(); ++d) {
      if (!e[d].is_boolean()) throw validation_error("state.excluded", "excluded must be a boolean array of length D");
      s.excluded[d] = e[d].get<bool>();
    }
  }
  if (j.contains("terminated")) {
    if (!j.at("terminated").is_boolean()) throw validation_error("state.terminated", "expected a boolean");
    s.terminated = j.at("terminated").get<bool>();
  }
  s.validate();
  return s;
}

inline Scenario scenario_from_json(const json& j, std::size_t index) {
  const std::string where = "scenarios[" + std::to_string(index + 1) + "]";
  detail::require_object(j, where);
  detail::reject_unknown(j, {"label", "true_probs"}, where);
  if (!j.contains("true_probs")) throw validation_error(where, "scenario needs true_probs");
  Scenario s{detail::as_numbers(j.at("true_probs"), where + ".true_probs"), "scenario-" + std::to_string(index + 1)};
  if (j.contains("label")) {
    if (!j.at("label").is_string()) throw validation_error(where + ".label", "expected a string");
    s.label = j.at("label").get<std::string>();
  }
  try {
    s.validate();
  } catch (const validation_error& e) {
    throw validation_error(where + "." + e.field(), e.what());
  }
  return s;
}

// ---------------------------------------------------------------- run config

/// Everything a CLI command or a session needs. Optional members are absent
/// when the file does not mention them.
struct RunConfig {
  DesignParams design;
  std::optional<HistoricalData> history;
  std::optional<PowerParams> omega;  ///< fixed weights; skips calibration
  std::optional<std::size_t> doses;
  std::vector<Scenario> scenarios;
  std::optional<std::uint64_t> reps;
  std::optional<std::uint64_t> seed;
  std::vector<Design> designs{Design::Hi3, Design::I3};
  std::size_t random_scenarios = 0;
  std::vector<int> sizes;
  std::optional<TrialState> state;
  std::optional<std::string> out;

  /// Number of doses implied by whichever sections are present; all must agree.
  std::size_t dose_count() const {
    std::optional<std::size_t> found = doses;
    auto merge = [&](std::size_t d, const char* field) {
      if (found && *found != d) throw validation_error(field, std::string(field) + ": dose count disagrees with other sections");
      found = d;
    };
    if (history) merge(history->doses(), "history");
    if (omega) merge(omega->omega.size(), "omega");
    for (const auto& s : scenarios) merge(s.true_probs.size(), "scenarios");
    if (state) merge(state->doses(), "state");
    if (!found || *found == 0) throw validation_error("doses", "cannot infer the number of doses; give history or doses");
    return *found;
  }

  HistoricalData history_or_empty() const { return history ? *history : HistoricalData::empty(dose_count()); }

  void validate() const {
    design.validate();
    const std::size_t d = dose_count();
    if (omega) omega->validate();
    if (reps && *reps < 1) throw validation_error("reps", "reps must be at least 1");
    for (int n : sizes)
      if (n < 1) throw validation_error("sizes", "sample sizes must be positive integers");
    if (designs.empty()) throw validation_error("designs", "no designs given");
    (void)d;
  }
};

inline RunConfig config_from_json(const json& j) {
  detail::require_object(j, "");
  detail::reject_unknown(j, {"version", "design", "history", "omega", "doses", "scenarios", "reps", "seed", "designs",
                             "random_scenarios", "sizes", "state", "out"},
                         "");
  if (!j.contains("version")) throw validation_error("version", "config needs a version field");
  if (detail::as_integer(j.at("version"), "version") != kConfigVersion)
    throw validation_error("version", "unsupported config version (expected " + std::to_string(kConfigVersion) + ")");

  RunConfig c;
  if (j.contains("design")) c.design = design_from_json(j.at("design"));
  if (j.contains("history")) c.history = history_from_json(j.at("history"));
  if (j.contains("omega")) {
    c.omega = PowerParams{detail::as_numbers(j.at("omega"), "omega")};
    c.omega->validate();
  }
  if (j.contains("doses")) {
    const auto d = detail::as_integer(j.at("doses"), "doses");
    if (d < 1 || d > 1000) throw validation_error("doses", "doses must lie in 1..1000");
    c.doses = static_cast<std::size_t>(d);
  }
  if (j.contains("scenarios")) {
    const auto& s = j.at("scenarios");
    if (!s.is_array()) throw validation_error("scenarios", "expected an array of scenarios");
    for (std::size_t i = 0; i < s.size(); ++i) c.scenarios.push_back(scenario_from_json(s[i], i));
  }
  if (j.contains("reps")) c.reps = detail::as_unsigned(j.at("reps"), "reps");
  if (j.contains("seed")) c.seed = detail::as_unsigned(j.at("seed"), "seed");
  if (j.contains("designs")) {
    const auto& d = j.at("designs");
    if (!d.is_array()) throw validation_error("designs", "expected an array of design names");
    std::string joined;
    for (const auto& item : d) {
      if (!item.is_string()) throw validation_error("designs", "expected an array of design names");
      joined += (joined.empty() ? "" : ",") + item.get<std::string>();
    }
    c.designs = parse_design_list(joined);
  }
  if (j.contains("random_scenarios")) c.random_scenarios = detail::as_unsigned(j.at("random_scenarios"), "random_scenarios");
  if (j.contains("sizes")) {
    const auto& s = j.at("sizes");
    if (!s.is_array()) throw validation_error("sizes", "expected an array of sample sizes");
    for (std::size_t i = 0; i < s.size(); ++i) c.sizes.push_back(detail::as_int(s[i], "sizes"));
  }
  if (j.contains("state")) c.state = state_from_json(j.at("state"));
  if (j.contains("out")) {
    if (!j.at("out").is_string()) throw validation_error("out", "expected a path string");
    c.out = j.at("out").get<std::string>();
  }
  c.validate();
  return c;
}

inline json parse_json_text(std::string_view text, const std::string& what = "config") {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw validation_error(what, what + ": malformed JSON: " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(parse_json_text(read_file(path), path.string()));
}

/// Flag beats file, file beats HI3_SEED, and kDefaultSeed is the last resort.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> file,
                                  const char* env) {
  if (flag) return *flag;
  if (file) return *file;
  if (env && *env) {
    const std::string text(env);
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      if (text.front() != '-') v = std::stoull(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) throw validation_error("HI3_SEED", "HI3_SEED must be a non-negative integer");
    return v;
  }
  return kDefaultSeed;
}

/// Priors for the Hi3+3 arm: fixed weights when given, else calibrated with the
/// calibration stream of `seed` (the same stream simulate_batch uses).
inline PriorSet config_priors(const RunConfig& c, std::uint64_t seed) {
  const HistoricalData h = c.history_or_empty();
  if (c.omega) return transformed_prior(h, *c.omega, c.design);
  return calibrated_priors(h, c.design, calibration_seed(seed));
}

inline PriorSet design_priors(Design design, const RunConfig& c, std::uint64_t seed) {
  return design == Design::Hi3 ? config_priors(c, seed) : vague_prior(c.dose_count(), c.design);
}

// ---------------------------------------------------------------- json writing

inline json to_json(const DesignParams& dp) {
  return {{"p_target", dp.p_target}, {"eps1", dp.eps1},          {"eps2", dp.eps2},
          {"xi", dp.xi},             {"a0", dp.a0},              {"b0", dp.b0},
          {"alpha", dp.alpha},       {"K", detail::extended_to_json(dp.ess_cap)},
          {"cohort_size", dp.cohort_size}, {"max_n", dp.max_n}, {"table_cap", dp.table_cap}};
}

inline json to_json(const HistoricalData& h) { return {{"x", h.dlt}, {"n", h.patients}}; }

inline json to_json(const TrialState& s) {
  json excluded = json::array();
  for (bool e : s.excluded) excluded.push_back(e);
  return {{"current_dose", s.current + 1}, {"x", s.dlt},         {"n", s.patients},
          {"excluded", excluded},          {"terminated", s.terminated}};
}

inline json to_json(const PriorSet& priors) {
  json out = json::array();
  for (std::size_t d = 0; d < priors.size(); ++d) {
    const auto& p = priors[d];
    out.push_back({{"dose", d + 1}, {"omega", p.omega}, {"ess", p.ess}, {"a_star", p.a_star}, {"p_star", p.mean}});
  }
  return out;
}

inline json to_json(const ConditionReport& r) {
  return {{"tolerability_fraction", r.tolerability_fraction},
          {"tolerability_ok", r.tolerability_ok},
          {"ceiling_ok", r.ceiling_ok},
          {"retaining_ok", r.retaining_ok}};
}

inline json to_json(const CalibrationWorkspace& ws) {
  json observed = json::array();
  for (auto d : ws.observed) observed.push_back(d + 1);
  json fell_back = json::array();
  for (bool f : ws.fell_back) fell_back.push_back(f);
  return {{"seed", ws.seed},
          {"observed", observed},
          {"pseudo_history", to_json(ws.pseudo_hist)},
          {"p_prime", ws.p_prime},
          {"omega_intermediate", ws.omega_intermediate},
          {"omega_final", ws.omega_final},
          {"step2_means", ws.step2_means},
          {"step3_means", ws.step3_means},
          {"fell_back", fell_back}};
}

inline json to_json(const Fractions& f) { return {{"q1", f.q1}, {"q2", f.q2}}; }

inline json to_json(const Action& a) {
  return {{"decision", symbol(a.decision)},
          {"core", symbol(a.core)},
          {"from_dose", a.from + 1},
          {"to_dose", a.to + 1},
          {"q1", a.fractions.q1},
          {"q2", a.fractions.q2},
          {"tail", a.tail}};
}

inline std::string_view rule_name(MtdRule r) {
  return r == MtdRule::NotExcluded ? "not-excluded" : "estimate-bound";
}

inline json to_json(const MtdResult& r) {
  json p1 = json::array();
  json p2 = json::array();
  for (double v : r.p_tilde_prior) p1.push_back(detail::number_or_null(v));
  for (double v : r.p_tilde_vague) p2.push_back(detail::number_or_null(v));
  json safe = json::array();
  for (auto d : r.d_safe) safe.push_back(d + 1);
  return {{"selected", r.selected ? json(*r.selected + 1) : json(nullptr)},
          {"p_tilde_prior", p1},
          {"p_tilde_vague", p2},
          {"d_safe", safe},
          {"rule", rule_name(r.rule)}};
}

inline json to_json(const SimulationSummary& s) {
  return {{"pcs", s.pcs},           {"sel_over", s.sel_over}, {"sel_under", s.sel_under},
          {"none_sel", s.none_sel}, {"pat_at", s.pat_at},     {"pat_over", s.pat_over},
          {"pat_under", s.pat_under}, {"tox", s.tox},         {"pcs_se", s.pcs_se},
          {"reps", s.reps},         {"seed", s.seed}};
}

// ---------------------------------------------------------------- decision tables

/// Rows are n = 1..cap, columns x = 0..cap; cells with x > n stay empty.
inline std::string table_to_csv(const DecisionTable& t) {
  std::string out = "n";
  for (int x = 0; x <= t.cap(); ++x) out += ",x=" + std::to_string(x);
  out += '\n';
  for (int n = 1; n <= t.cap(); ++n) {
    out += std::to_string(n);
    for (int x = 0; x <= t.cap(); ++x) {
      out += ',';
      if (x <= n) out += symbol(t.at(n, x));
    }
    out += '\n';
  }
  return out;
}

inline DecisionTable table_from_csv(std::string_view text, std::size_t dose) {
  auto lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 2) throw validation_error("table", "decision table CSV needs a header and rows");
  const int cap = static_cast<int>(lines.size()) - 1;
  if (split(lines[0], ',').size() != static_cast<std::size_t>(cap + 2))
    throw validation_error("table", "decision table header width does not match its row count");
  DecisionTable t(dose, cap);
  for (int n = 1; n <= cap; ++n) {
    const auto cells = split(lines[n], ',');
    if (cells.size() != static_cast<std::size_t>(cap + 2) || cells[0] != std::to_string(n))
      throw validation_error("table", "malformed decision table row " + std::to_string(n));
    for (int x = 0; x <= cap; ++x) {
      const auto& cell = cells[x + 1];
      if (x > n) {
        if (!cell.empty()) throw validation_error("table", "cell beyond x = n must be empty");
        continue;
      }
      const auto d = parse_decision(cell);
      if (!d || *d == Decision::TerminateTrial) throw validation_error("table", "unknown table symbol '" + cell + "'");
      t.set(n, x, *d);
    }
  }
  return t;
}

inline json to_json(const DecisionTable& t) {
  json rows = json::array();
  for (int n = 1; n <= t.cap(); ++n) {
    json row = json::array();
    for (int x = 0; x <= n; ++x) row.push_back(symbol(t.at(n, x)));
    rows.push_back(row);
  }
  return {{"dose", t.dose() + 1}, {"cap", t.cap()}, {"rows", rows}};
}

inline DecisionTable table_from_json(const json& j) {
  detail::require_object(j, "table");
  const auto dose = detail::as_integer(j.at("dose"), "table.dose");
  const int cap = detail::as_int(j.at("cap"), "table.cap");
  if (dose < 1 || cap < 1) throw validation_error("table", "dose and cap must be positive");
  const auto& rows = j.at("rows");
  if (!rows.is_array() || rows.size() != static_cast<std::size_t>(cap))
    throw validation_error("table.rows", "expected one row per n");
  DecisionTable t(static_cast<std::size_t>(dose - 1), cap);
  for (int n = 1; n <= cap; ++n) {
    const auto& row = rows[n - 1];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(n + 1))
      throw validation_error("table.rows", "row " + std::to_string(n) + " must hold n + 1 cells");
    for (int x = 0; x <= n; ++x) {
      const auto d = row[x].is_string() ? parse_decision(row[x].get<std::string>()) : std::nullopt;
      if (!d) throw validation_error("table.rows", "unknown table symbol");
      t.set(n, x, *d);
    }
  }
  return t;
}

inline json to_json(const std::vector<DecisionTable>& tables) {
  json out = json::array();
  for (const auto& t : tables) out.push_back(to_json(t));
  return out;
}

// ---------------------------------------------------------------- summaries

struct SummaryRow {
  std::string design;
  std::string scenario;
  int size = 0;
  SimulationSummary summary;

  bool operator==(const SummaryRow&) const = default;
};

inline constexpr std::string_view kSummaryHeader =
    "design,scenario,size,pcs,sel_over,sel_under,none_sel,pat_at,pat_over,pat_under,tox,pcs_se,reps,seed";

/// Machine-readable summary: exact doubles so that parsing restores the rows.
inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out(kSummaryHeader);
  out += '\n';
  for (const auto& r : rows) {
    if (r.design.find(',') != std::string::npos || r.scenario.find(',') != std::string::npos)
      throw validation_error("scenario", "labels must not contain commas");
    const auto& s = r.summary;
    out += r.design + ',' + r.scenario + ',' + std::to_string(r.size);
    for (double v : {s.pcs, s.sel_over, s.sel_under, s.none_sel, s.pat_at, s.pat_over, s.pat_under, s.tox, s.pcs_se})
      out += ',' + exact(v);
    out += ',' + std::to_string(s.reps) + ',' + std::to_string(s.seed) + '\n';
  }
  return out;
}

inline std::vector<SummaryRow> parse_summary_csv(std::string_view text) {
  auto lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines[0] != kSummaryHeader) throw validation_error("summary", "unexpected summary header");
  std::vector<SummaryRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto c = split(lines[i], ',');
    if (c.size() != 14) throw validation_error("summary", "summary row " + std::to_string(i) + " has wrong width");
    SummaryRow r;
    r.design = c[0];
    r.scenario = c[1];
    r.size = static_cast<int>(parse_double(c[2], "size"));
    auto& s = r.summary;
    double* fields[] = {&s.pcs, &s.sel_over, &s.sel_under, &s.none_sel, &s.pat_at,
                        &s.pat_over, &s.pat_under, &s.tox, &s.pcs_se};
    for (std::size_t k = 0; k < 9; ++k) *fields[k] = parse_double(c[3 + k], "summary");
    s.reps = std::stoull(c[12]);
    s.seed = std::stoull(c[13]);
    rows.push_back(r);
  }
  return rows;
}

/// Fixed-width text rendering at 4 decimals for terminals.
inline std::string summary_text(const std::vector<SummaryRow>& rows) {
  std::string out = "design  scenario              size  pcs     sel_over sel_under none    pat_at  pat_over pat_under tox\n";
  for (const auto& r : rows) {
    char buf[256];
    const auto& s = r.summary;
    std::snprintf(buf, sizeof buf, "%-7s %-21s %4d  %s  %s   %s    %s  %s  %s   %s    %s\n", r.design.c_str(),
                  r.scenario.c_str(), r.size, fixed4(s.pcs).c_str(), fixed4(s.sel_over).c_str(),
                  fixed4(s.sel_under).c_str(), fixed4(s.none_sel).c_str(), fixed4(s.pat_at).c_str(),
                  fixed4(s.pat_over).c_str(), fixed4(s.pat_under).c_str(), fixed4(s.tox).c_str());
    out += buf;
  }
  return out;
}

inline json to_json(const std::vector<SummaryRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = to_json(r.summary);
    j["design"] = r.design;
    j["scenario"] = r.scenario;
    j["size"] = r.size;
    out.push_back(j);
  }
  return out;
}

/// Plain mean of each metric across rows; pcs_se is the standard error of
/// that mean across scenarios.
inline SimulationSummary average_summaries(const std::vector<SimulationSummary>& xs) {
  if (xs.empty()) throw std::invalid_argument("average_summaries: no rows");
  SimulationSummary m;
  for (const auto& s : xs) {
    m.pcs += s.pcs;
    m.sel_over += s.sel_over;
    m.sel_under += s.sel_under;
    m.none_sel += s.none_sel;
    m.pat_at += s.pat_at;
    m.pat_over += s.pat_over;
    m.pat_under += s.pat_under;
    m.tox += s.tox;
    m.reps += s.reps;
  }
  const double n = static_cast<double>(xs.size());
  for (double* f : {&m.pcs, &m.sel_over, &m.sel_under, &m.none_sel, &m.pat_at, &m.pat_over, &m.pat_under, &m.tox})
    *f /= n;
  double ss = 0.0;
  for (const auto& s : xs) ss += (s.pcs - m.pcs) * (s.pcs - m.pcs);
  m.pcs_se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  m.seed = xs.front().seed;
  return m;
}

}  // namespace hi3
