#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "hi3/commands.hpp"

using namespace hi3;

namespace {

RunConfig cfg_of(const char* text) { return config_from_json(json::parse(text)); }

std::string file_named(const CommandOutput& out, const std::string& name) {
  for (const auto& [n, content] : out.files)
    if (n == name) return content;
  ADD_FAILURE() << "no output file " << name;
  return {};
}

std::string line_starting(const std::string& text, const std::string& prefix) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string line = text.substr(pos, end - pos);
    if (line.rfind(prefix, 0) == 0) return line;
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return {};
}

}  // namespace

TEST(Decide, WorkedPriorEscalatesFromFirstDose) {
  const RunConfig cfg = cfg_of(R"({"version": 1, "design": {"a0": 0.5, "b0": 0.5},
    "history": {"x": [1, 0, 0, 2, 3], "n": [6, 3, 3, 6, 3]}, "omega": [1, 1, 1, 1, 1],
    "state": {"current_dose": 1, "x": [1, 0, 0, 0, 0], "n": [3, 0, 0, 0, 0]}})");
  const auto out = cmd_decide(cfg, 1);
  EXPECT_EQ(line_starting(out.text, "decision"), "decision E");
  // a* at dose 1 is 7 times the pooled mean (3/14 + 1/4) / 3.
  const double a_star = 7.0 * (3.0 / 14.0 + 0.25) / 3.0;
  EXPECT_EQ(line_starting(out.text, "q1"), "q1 " + fixed4((1.0 + a_star) / 10.0));
  EXPECT_EQ(line_starting(out.text, "q2"), "q2 " + fixed4(a_star / 10.0));
  EXPECT_EQ(line_starting(out.text, "q1"), "q1 0.2083");
  EXPECT_EQ(line_starting(out.text, "next_dose"), "next_dose 2");
  const json doc = json::parse(file_named(out, "decision.json"));
  EXPECT_EQ(doc["action"]["to_dose"], 2);
  EXPECT_EQ(doc["state"]["current_dose"], 2);
}

TEST(Decide, FullToxicityAtFirstDoseTerminates) {
  const RunConfig cfg = cfg_of(R"({"version": 1, "doses": 3, "designs": ["i3+3"],
    "state": {"current_dose": 1, "x": [3, 0, 0], "n": [3, 0, 0]}})");
  const auto out = cmd_decide(cfg, 1);
  EXPECT_EQ(line_starting(out.text, "decision"), "decision TERMINATE");
  EXPECT_EQ(line_starting(out.text, "next_dose"), "next_dose none");
}

TEST(Decide, RejectsUndecidableStates) {
  EXPECT_THROW(cmd_decide(cfg_of(R"({"version": 1, "doses": 3})"), 1), validation_error);
  EXPECT_THROW(cmd_decide(cfg_of(R"({"version": 1, "state": {"current_dose": 2, "x": [0, 0, 0], "n": [3, 0, 0]}})"), 1),
               validation_error);
  EXPECT_THROW(cmd_decide(cfg_of(R"({"version": 1, "state": {"current_dose": 1, "x": [3, 0, 0], "n": [3, 0, 0],
    "excluded": [false, false, false], "terminated": true}})"), 1), validation_error);
}

TEST(Tables, EmptyHistoryGivesIntervalTables) {
  const auto out = cmd_tables(cfg_of(R"({"version": 1, "doses": 2})"), 1);
  const auto t = table_from_csv(file_named(out, "table_dose1.csv"), 0);
  EXPECT_EQ(t, i3_table(DesignParams{}));
  EXPECT_EQ(t.at(3, 1), Decision::Stay);
  EXPECT_EQ(t.at(3, 3), Decision::DeEscalateUnacceptable);
  EXPECT_EQ(out.text.rfind("# dose 1\nn,x=0", 0), 0u);
  const json doc = json::parse(file_named(out, "tables.json"));
  EXPECT_EQ(table_from_json(doc["tables"][0]), t);
}

TEST(Tables, ReferenceHistoryTopDoseNeverEscalatesAtThree) {
  const auto out = cmd_tables(cfg_of(R"({"version": 1, "history": {"x": [0, 1, 1, 2, 3], "n": [3, 6, 6, 9, 6]}})"), 1);
  const auto t = table_from_csv(file_named(out, "table_dose5.csv"), 4);
  for (int x = 0; x <= 3; ++x) EXPECT_NE(t.at(3, x), Decision::Escalate) << "x=" << x;
}

TEST(Calibrate, EmptyHistoryReportsVagueEss) {
  const auto out = cmd_calibrate(cfg_of(R"({"version": 1, "doses": 3, "history": {"x": [0, 0, 0], "n": [0, 0, 0]}})"), 1);
  const json doc = json::parse(file_named(out, "calibration.json"));
  for (const auto& p : doc["priors"]) EXPECT_DOUBLE_EQ(p["ess"].get<double>(), 0.01);
  EXPECT_THROW(cmd_calibrate(cfg_of(R"({"version": 1, "doses": 3})"), 1), validation_error);
}

TEST(Calibrate, WorkedExampleTable) {
  const auto out = cmd_calibrate(cfg_of(R"({"version": 1, "design": {"a0": 0.5, "b0": 0.5},
    "history": {"x": [1, 0, 0, 2, 3], "n": [6, 3, 3, 6, 3]}, "omega": [1, 1, 1, 1, 1]})"), 1);
  const json doc = json::parse(file_named(out, "calibration.json"));
  const double ess[] = {7, 4, 4, 7, 4};
  const double pooled = (3.0 / 14.0 + 0.25) / 3.0;
  const double mean[] = {pooled, pooled, pooled, 5.0 / 14.0, 0.875};
  for (std::size_t d = 0; d < 5; ++d) {
    EXPECT_DOUBLE_EQ(doc["priors"][d]["ess"].get<double>(), ess[d]);
    EXPECT_NEAR(doc["priors"][d]["a_star"].get<double>(), ess[d] * mean[d], 1e-14);
  }
  EXPECT_FALSE(doc.contains("workspace"));
}

TEST(Simulate, FixedScenarioRowEqualsBatch) {
  const RunConfig cfg = cfg_of(R"({"version": 1, "history": {"x": [0, 9, 0, 0, 0], "n": [3, 27, 0, 0, 0]},
    "scenarios": [{"label": "s2", "true_probs": [0.15, 0.27, 0.40, 0.50, 0.65]}], "reps": 200})");
  const auto rows = simulation_rows(cfg, 9);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].design, "hi3+3");
  EXPECT_EQ(rows[0].scenario, "s2");
  EXPECT_EQ(rows[0].size, 30);
  EXPECT_EQ(rows[0].summary, simulate_batch(cfg.scenarios[0], *cfg.history, cfg.design, 200, 9));
  EXPECT_EQ(rows[1].summary, simulate_i3(cfg.scenarios[0], cfg.design, 200, 9));
}

TEST(Simulate, SizesAndDesignsExpandRows) {
  RunConfig cfg = cfg_of(R"({"version": 1, "doses": 5, "designs": ["hi3+3"], "sizes": [24, 30],
    "scenarios": [{"true_probs": [0.08, 0.15, 0.31, 0.48, 0.55]}], "reps": 50})");
  const auto rows = simulation_rows(cfg, 3);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].size, 24);
  EXPECT_EQ(rows[1].size, 30);
  const auto csv = cmd_simulate(cfg, 3).files;
  EXPECT_EQ(parse_summary_csv(csv.at(0).second), rows);
}

TEST(Simulate, RandomScenariosAddMeanRow) {
  const RunConfig cfg = cfg_of(R"({"version": 1, "doses": 4, "random_scenarios": 6, "reps": 20})");
  const auto rows = simulation_rows(cfg, 5);
  ASSERT_EQ(rows.size(), 2u * 7u);
  EXPECT_EQ(rows[6].scenario, "mean");
  EXPECT_EQ(rows[13].scenario, "mean");
  double pcs = 0.0;
  for (int i = 0; i < 6; ++i) pcs += rows[i].summary.pcs;
  EXPECT_NEAR(rows[6].summary.pcs, pcs / 6.0, 1e-12);
}

TEST(Simulate, RejectsMissingScenarios) {
  EXPECT_THROW(simulation_rows(cfg_of(R"({"version": 1, "doses": 5})"), 1), validation_error);
  RunConfig cfg = cfg_of(R"({"version": 1, "doses": 5})");
  Overrides o;
  o.reps = 0;
  EXPECT_THROW(apply(cfg, o), validation_error);
}

TEST(Simulate, DeterministicOutputs) {
  const RunConfig cfg = cfg_of(R"({"version": 1, "doses": 3, "random_scenarios": 3, "reps": 30})");
  const auto a = cmd_simulate(cfg, 77);
  const auto b = cmd_simulate(cfg, 77);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.files, b.files);
  EXPECT_NE(cmd_simulate(cfg, 78).files, a.files);
}

TEST(SelectMtd, ReportsSelectionAndCandidates) {
  const auto out = cmd_select_mtd(cfg_of(R"({"version": 1, "designs": ["i3+3"],
    "state": {"current_dose": 2, "x": [0, 2, 3], "n": [6, 9, 3]}})"), 1);
  EXPECT_EQ(line_starting(out.text, "selected"), "selected 2");
  const json doc = json::parse(file_named(out, "mtd.json"));
  EXPECT_EQ(doc["mtd"]["selected"], 2);
  EXPECT_EQ(doc["mtd"]["rule"], "estimate-bound");
}

TEST(SelectMtd, TerminatedSelectsNone) {
  const auto out = cmd_select_mtd(cfg_of(R"({"version": 1, "state": {"current_dose": 1, "x": [3, 0], "n": [3, 0],
    "excluded": [true, true], "terminated": true}})"), 1);
  EXPECT_EQ(line_starting(out.text, "selected"), "selected none");
}

TEST(Outputs, WrittenToDirectory) {
  const auto dir = std::filesystem::temp_directory_path() / ("hi3_cmd_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  const auto out = cmd_tables(cfg_of(R"({"version": 1, "doses": 2})"), 1);
  write_outputs(out, dir / "nested");
  EXPECT_TRUE(std::filesystem::exists(dir / "nested" / "table_dose2.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "nested" / "tables.json"));
  std::filesystem::remove_all(dir);
}
