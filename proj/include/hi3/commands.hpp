#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hi3/calibration.hpp"
#include "hi3/decision.hpp"
#include "hi3/io.hpp"
#include "hi3/mtd.hpp"
#include "hi3/simulate.hpp"

namespace hi3 {

/// Command-line values that override the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> reps;
  std::optional<std::string> out;
  std::optional<std::string> designs;
  std::optional<std::size_t> random_scenarios;
  std::optional<std::string> sizes;
};

inline void apply(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = o.seed;
  if (o.reps) {
    if (*o.reps < 1) throw validation_error("reps", "reps must be at least 1");
    cfg.reps = o.reps;
  }
  if (o.out) cfg.out = o.out;
  if (o.designs) cfg.designs = parse_design_list(*o.designs);
  if (o.random_scenarios) cfg.random_scenarios = *o.random_scenarios;
  if (o.sizes) cfg.sizes = parse_size_list(*o.sizes);
  cfg.validate();
}

/// What a command produced: text for stdout and named files for --out.
struct CommandOutput {
  std::string text;
  std::vector<std::pair<std::string, std::string>> files;
};

inline void write_outputs(const CommandOutput& out, const std::filesystem::path& dir) {
  ensure_directory(dir);
  for (const auto& [name, content] : out.files) write_file_atomic(dir / name, content);
}

inline std::uint64_t default_reps() { return 1000; }

inline CommandOutput cmd_calibrate(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.history) throw validation_error("history", "calibrate needs a history section");
  const HistoricalData& h = *cfg.history;
  Calibration cal;
  if (cfg.omega) {
    cal.omega = *cfg.omega;
  } else {
    cal = calibrate_omegas(h, cfg.design, calibration_seed(seed));
  }
  const PriorSet priors = transformed_prior(h, cal.omega, cfg.design);
  const auto reports = check_conditions(h, priors, cfg.design);

  std::string text = "dose  omega   ess      a_star   p_star  tolerability  ceiling  retaining\n";
  json conditions = json::array();
  for (std::size_t d = 0; d < priors.size(); ++d) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-5zu %s  %-8s %-8s %s  %-12s  %-7s  %s\n", d + 1, fixed4(priors[d].omega).c_str(),
                  fixed4(priors[d].ess).c_str(), fixed4(priors[d].a_star).c_str(), fixed4(priors[d].mean).c_str(),
                  fixed4(reports[d].tolerability_fraction).c_str(), reports[d].ceiling_ok ? "ok" : "FAIL",
                  reports[d].retaining_ok ? "ok" : "FAIL");
    text += buf;
    conditions.push_back(to_json(reports[d]));
  }
  json doc{{"version", kConfigVersion},
           {"seed", seed},
           {"design", to_json(cfg.design)},
           {"history", to_json(h)},
           {"omega", cal.omega.omega},
           {"priors", to_json(priors)},
           {"conditions", conditions}};
  if (!cfg.omega) doc["workspace"] = to_json(cal.workspace);
  return {text, {{"calibration.json", doc.dump(2) + "\n"}}};
}

inline CommandOutput cmd_tables(const RunConfig& cfg, std::uint64_t seed) {
  const Design design = cfg.designs.front();
  const PriorSet priors = design_priors(design, cfg, seed);
  const auto tables = build_tables(priors, cfg.design);
  CommandOutput out;
  for (const auto& t : tables) {
    const std::string csv = table_to_csv(t);
    out.text += "# dose " + std::to_string(t.dose() + 1) + "\n" + csv;
    out.files.emplace_back("table_dose" + std::to_string(t.dose() + 1) + ".csv", csv);
  }
  json doc{{"version", kConfigVersion},
           {"design_name", design_name(design)},
           {"seed", seed},
           {"design", to_json(cfg.design)},
           {"priors", to_json(priors)},
           {"tables", to_json(tables)}};
  out.files.emplace_back("tables.json", doc.dump(2) + "\n");
  return out;
}

/// One row per design x scenario x size. Fixed scenarios share `seed` and the
/// config history; random scenarios each get their own history and stream,
/// followed by one "mean" row per design and size.
inline std::vector<SummaryRow> simulation_rows(const RunConfig& cfg, std::uint64_t seed) {
  const std::uint64_t reps = cfg.reps.value_or(default_reps());
  std::vector<int> sizes = cfg.sizes;
  if (sizes.empty()) sizes.push_back(cfg.design.max_n);

  std::vector<StudyCase> cases;
  if (cfg.random_scenarios > 0) {
    cases = random_study(cfg.random_scenarios, cfg.dose_count(), cfg.design, seed);
  } else {
    if (cfg.scenarios.empty()) throw validation_error("scenarios", "simulate needs scenarios or --random-scenarios");
    const HistoricalData h = cfg.history_or_empty();
    for (const auto& s : cfg.scenarios) cases.push_back({s, h, seed});
  }

  std::vector<SummaryRow> rows;
  for (Design design : cfg.designs) {
    for (int size : sizes) {
      DesignParams dp = cfg.design;
      dp.max_n = size;
      dp.validate();
      std::vector<SimulationSummary> per_case;
      for (const auto& c : cases) {
        PriorSet priors;
        if (design == Design::I3) {
          priors = vague_prior(c.scenario.true_probs.size(), dp);
        } else if (cfg.omega && cfg.random_scenarios == 0) {
          priors = transformed_prior(c.history, *cfg.omega, dp);
        } else {
          priors = calibrated_priors(c.history, dp, calibration_seed(c.seed));
        }
        const auto s = simulate_design(c.scenario, priors, dp, reps, c.seed, default_mtd_rule(design));
        per_case.push_back(s);
        rows.push_back({std::string(design_name(design)), c.scenario.label, size, s});
      }
      if (cfg.random_scenarios > 0)
        rows.push_back({std::string(design_name(design)), "mean", size, average_summaries(per_case)});
    }
  }
  return rows;
}

inline CommandOutput cmd_simulate(const RunConfig& cfg, std::uint64_t seed) {
  const auto rows = simulation_rows(cfg, seed);
  json doc{{"version", kConfigVersion}, {"seed", seed}, {"design", to_json(cfg.design)}, {"rows", to_json(rows)}};
  return {summary_text(rows), {{"summary.csv", summary_csv(rows)}, {"summary.json", doc.dump(2) + "\n"}}};
}

/// Decision after the latest cohort at the current dose of the config state.
inline CommandOutput cmd_decide(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.state) throw validation_error("state", "decide needs a state section");
  TrialState state = *cfg.state;
  if (state.terminated) throw validation_error("state.terminated", "trial is already terminated");
  if (state.patients[state.current] < 1)
    throw validation_error("state.n", "current dose has no patients; nothing to decide");
  const Design design = cfg.designs.front();
  const PriorSet priors = design_priors(design, cfg, seed);
  const Action act = next_action(state, priors, cfg.design);

  std::string text;
  text += "decision " + std::string(symbol(act.decision)) + "\n";
  text += "core " + std::string(symbol(act.core)) + "\n";
  text += "q1 " + fixed4(act.fractions.q1) + "\n";
  text += "q2 " + fixed4(act.fractions.q2) + "\n";
  text += "tail " + fixed4(act.tail) + "\n";
  text += "next_dose " + (state.terminated ? std::string("none") : std::to_string(act.to + 1)) + "\n";
  json doc{{"version", kConfigVersion},
           {"design_name", design_name(design)},
           {"action", to_json(act)},
           {"state", to_json(state)}};
  return {text, {{"decision.json", doc.dump(2) + "\n"}}};
}

inline CommandOutput cmd_select_mtd(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.state) throw validation_error("state", "select-mtd needs a state section");
  const Design design = cfg.designs.front();
  const PriorSet priors = design_priors(design, cfg, seed);
  MtdResult r = select_mtd(*cfg.state, priors, cfg.design, default_mtd_rule(design));
  if (cfg.state->terminated) r.selected.reset();

  std::string text = "selected " + (r.selected ? std::to_string(*r.selected + 1) : std::string("none")) + "\n";
  text += "dose  n    x    p_tilde_prior  p_tilde_vague  candidate\n";
  for (std::size_t d = 0; d < cfg.state->doses(); ++d) {
    const bool candidate = std::find(r.d_safe.begin(), r.d_safe.end(), d) != r.d_safe.end();
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-5zu %-4d %-4d %-14s %-14s %s\n", d + 1, cfg.state->patients[d],
                  cfg.state->dlt[d], fixed4(r.p_tilde_prior[d]).c_str(), fixed4(r.p_tilde_vague[d]).c_str(),
                  candidate ? "yes" : "no");
    text += buf;
  }
  json doc{{"version", kConfigVersion}, {"design_name", design_name(design)}, {"mtd", to_json(r)}};
  return {text, {{"mtd.json", doc.dump(2) + "\n"}}};
}

}  // namespace hi3
