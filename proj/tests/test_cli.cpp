#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "hi3/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hi3_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args, const std::string& env = "env -u HI3_SEED") const {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = env + " " + HI3_CLI_PATH + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, hi3::read_file(out), hi3::read_file(err)};
  }

  fs::path write(const std::string& name, const std::string& content) const {
    hi3::write_file_atomic(dir_ / name, content);
    return dir_ / name;
  }

  static std::string sample(const std::string& name) { return std::string(HI3_SAMPLES_DIR) + "/" + name; }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, DecideFromSample) {
  const CliRun r = run("decide --config " + sample("decide.json"));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("decision ", 0), 0u);
}

TEST_F(CliTest, TablesWriteFilesToOut) {
  const CliRun r = run("tables --config " + sample("reference-history.json") + " --out " + (dir_ / "t").string());
  EXPECT_EQ(r.code, 0) << r.err;
  for (int d = 1; d <= 5; ++d) EXPECT_TRUE(fs::exists(dir_ / "t" / ("table_dose" + std::to_string(d) + ".csv")));
}

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST_F(CliTest, BadInputExitsTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("simulate --reps notanumber").code, 2);
  EXPECT_EQ(run("decide --config " + write("bad.json", "{\"version\": 1,").string()).code, 2);
  const CliRun unknown = run("decide --config " + write("u.json", R"({"version": 1, "colour": 1})").string());
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("[colour]"), std::string::npos);
  EXPECT_EQ(run("simulate --config " + sample("scenario2.json") + " --reps 0").code, 2);
  EXPECT_EQ(run("decide --config " + sample("reference-history.json")).code, 2);
  const fs::path unseeded = write("h.json", R"({"version": 1, "history": {"x": [0, 1], "n": [3, 6]}})");
  EXPECT_EQ(run("tables --config " + unseeded.string(), "HI3_SEED=abc").code, 2);
}

TEST_F(CliTest, IoFailureExitsThree) {
  EXPECT_EQ(run("tables --config " + (dir_ / "missing.json").string()).code, 3);
  const fs::path blocker = write("blocker", "");
  EXPECT_EQ(run("tables --config " + sample("reference-history.json") + " --out " + (blocker / "sub").string()).code, 3);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  const std::string args = "simulate --config " + sample("scenario2.json") + " --reps 200 --seed 5 --out ";
  const CliRun a = run(args + (dir_ / "a").string());
  const CliRun b = run(args + (dir_ / "b").string());
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  for (const char* f : {"summary.csv", "summary.json"})
    EXPECT_EQ(hi3::read_file(dir_ / "a" / f), hi3::read_file(dir_ / "b" / f)) << f;
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  const fs::path cfg = write("c.json", R"({"version": 1, "doses": 3, "random_scenarios": 2, "reps": 20})");
  const CliRun env = run("simulate --config " + cfg.string(), "HI3_SEED=41");
  const CliRun flag = run("simulate --config " + cfg.string() + " --seed 41");
  const CliRun other = run("simulate --config " + cfg.string(), "HI3_SEED=42");
  ASSERT_EQ(env.code, 0) << env.err;
  EXPECT_EQ(env.out, flag.out);
  EXPECT_NE(env.out, other.out);
  const CliRun overridden = run("simulate --config " + cfg.string() + " --seed 41", "HI3_SEED=42");
  EXPECT_EQ(overridden.out, flag.out);
}

TEST_F(CliTest, FlagsOverrideConfig) {
  const CliRun r = run("simulate --config " + sample("scenario14-1.json") + " --reps 20 --designs i3+3 --sizes 18");
  ASSERT_EQ(r.code, 0) << r.err;
  const CliRun csv = run("simulate --config " + sample("scenario14-1.json") +
                      " --reps 20 --designs i3+3 --sizes 18 --out " + (dir_ / "o").string());
  const auto rows = hi3::parse_summary_csv(hi3::read_file(dir_ / "o" / "summary.csv"));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].design, "i3+3");
  EXPECT_EQ(rows[0].size, 18);
  EXPECT_EQ(rows[0].summary.reps, 20u);
}
