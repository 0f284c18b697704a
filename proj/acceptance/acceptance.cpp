#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hi3/commands.hpp"
#include "hi3/hi3.hpp"
#include "oracles.hpp"

using namespace hi3;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED{" << what << "}";
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    detail << " " << what << "=" << fixed4(got) << " (target " << want << " +/- " << tol << ")";
    require(std::fabs(got - want) <= tol, what);
  }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Verdict&)>& body, double budget_s = 0.0) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0) v.require(secs < budget_s, "runtime over " + fixed4(budget_s) + " s");
  if (!v.pass) ++failures;
  std::printf("%s %s:%s [%.1f s]\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.str().c_str(), secs);
  std::fflush(stdout);
}

constexpr std::uint64_t kSeed = 2024;
constexpr std::uint64_t kReps = 10000;

DesignParams defaults() { return DesignParams{}; }

DesignParams unbounded() {
  DesignParams dp;
  dp.ess_cap = kUnboundedEss;
  return dp;
}

}  // namespace

int main() {
  criterion("worked-example", [](Verdict& v) {
    DesignParams dp;
    dp.a0 = 0.5;
    dp.b0 = 0.5;
    const PriorSet p = transformed_prior({{1, 0, 0, 2, 3}, {6, 3, 3, 6, 3}}, PowerParams::uniform(5, 1.0), dp);
    const double ess[] = {7, 4, 4, 7, 4};
    const double mean[] = {0.154, 0.154, 0.154, 0.357, 0.875};
    const double a_star[] = {1.078, 0.616, 0.616, 2.5, 3.5};
    for (std::size_t d = 0; d < 5; ++d) {
      const std::string k = std::to_string(d + 1);
      v.require(std::fabs(p[d].ess - ess[d]) < 5e-4, "ess[" + k + "]=" + fixed4(p[d].ess) + " vs " + fixed4(ess[d]));
      v.require(std::fabs(p[d].mean - mean[d]) < 5e-4,
                "p_star[" + k + "]=" + fixed4(p[d].mean) + " vs " + fixed4(mean[d]));
      v.require(std::fabs(p[d].a_star - a_star[d]) < 5e-4,
                "a_star[" + k + "]=" + fixed4(p[d].a_star) + " vs " + fixed4(a_star[d]));
    }
    v.detail << " compared ess, p_star, a_star at 5e-4 for 5 doses";
  }, 1.0);

  criterion("reduction", [](Verdict& v) {
    const DesignParams dp = defaults();
    const auto tables = build_tables(calibrated_priors(HistoricalData::empty(5), dp, 1), dp);
    const DecisionTable ref = i3_table(dp);
    int cells = 0;
    for (const auto& t : tables) {
      for (int n = 1; n <= dp.table_cap; ++n) {
        for (int x = 0; x <= n; ++x) {
          ++cells;
          v.require(t.at(n, x) == ref.at(n, x), "cell dose " + std::to_string(t.dose() + 1) + " n=" +
                                                    std::to_string(n) + " x=" + std::to_string(x));
        }
      }
    }
    v.detail << " " << cells << " cells compared";
  }, 1.0);

  criterion("condition-satisfaction", [](Verdict& v) {
    const DesignParams dp = defaults();
    std::mt19937_64 gen(kSeed);
    std::uniform_int_distribution<int> cohorts(0, 10);
    int satisfied = 0;
    const int total = 1000;
    for (int rep = 0; rep < total; ++rep) {
      HistoricalData h = HistoricalData::empty(5);
      for (std::size_t d = 0; d < 5; ++d) {
        h.patients[d] = 3.0 * cohorts(gen);
        std::uniform_int_distribution<int> x(0, static_cast<int>(h.patients[d]));
        h.dlt[d] = x(gen);
      }
      const PriorSet pri = calibrated_priors(h, dp, derive_seed(kSeed, rep));
      bool ok = true;
      for (const auto& r : check_conditions(h, pri, dp)) ok = ok && r.all();
      satisfied += ok;
      if (!ok) v.detail << " violation@" << rep;
    }
    v.detail << " satisfied " << satisfied << "/" << total;
    v.require(satisfied >= total * 99 / 100, ">= 99%");
  });

  criterion("scenario-2", [](Verdict& v) {
    const Scenario s{{0.15, 0.27, 0.40, 0.50, 0.65}, "scenario-2"};
    const HistoricalData h{{0, 9, 0, 0, 0}, {3, 27, 0, 0, 0}};
    v.near(simulate_batch(s, h, defaults(), kReps, kSeed).pcs, 0.699, 0.07, "hi3+3 K=9");
    v.near(simulate_batch(s, h, unbounded(), kReps, kSeed).pcs, 0.898, 0.07, "hi3+3 K=inf");
    v.near(simulate_i3(s, defaults(), kReps, kSeed).pcs, 0.493, 0.05, "i3+3");
  }, 120.0);

  criterion("scenario-11", [](Verdict& v) {
    const Scenario s{{0.05, 0.10, 0.20, 0.30, 0.45}, "scenario-11"};
    const HistoricalData h{{2, 0, 6, 0, 0}, {9, 3, 18, 0, 0}};
    v.near(simulate_batch(s, h, defaults(), kReps, kSeed).pcs, 0.358, 0.07, "hi3+3 K=9");
    v.near(simulate_batch(s, h, unbounded(), kReps, kSeed).pcs, 0.212, 0.07, "hi3+3 K=inf");
    v.near(simulate_i3(s, defaults(), kReps, kSeed).pcs, 0.444, 0.05, "i3+3");
  });

  criterion("efficiency-sweep", [](Verdict& v) {
    const Scenario s{{0.08, 0.15, 0.31, 0.48, 0.55}, "scenario-14-1"};
    const HistoricalData h{{0, 3, 5, 0, 0}, {3, 15, 12, 0, 0}};
    const auto sweep = efficiency_sweep(s, h, defaults(), {24, 30}, kReps, kSeed);
    DesignParams dp30 = defaults();
    dp30.max_n = 30;
    const double i3 = simulate_i3(s, dp30, kReps, kSeed).pcs;
    v.near(sweep[0].pcs, 0.642, 0.07, "hi3+3@24");
    v.near(sweep[1].pcs, 0.660, 0.07, "hi3+3@30");
    v.near(i3, 0.493, 0.05, "i3+3@30");
    v.require(sweep[0].pcs >= i3, "hi3+3@24 >= i3+3@30");
  });

  criterion("random-scenario-ordering", [](Verdict& v) {
    RunConfig cfg;
    cfg.design = defaults();
    cfg.doses = 5;
    cfg.random_scenarios = 1000;
    cfg.reps = 1000;
    const auto rows = simulation_rows(cfg, kSeed);
    const SimulationSummary* hi = nullptr;
    const SimulationSummary* i3 = nullptr;
    for (const auto& r : rows) {
      if (r.scenario != "mean") continue;
      (r.design == "hi3+3" ? hi : i3) = &r.summary;
    }
    v.require(hi && i3, "mean rows present");
    if (!hi || !i3) return;
    v.detail << " pcs hi3+3=" << fixed4(hi->pcs) << " i3+3=" << fixed4(i3->pcs) << "; pat_over hi3+3="
             << fixed4(hi->pat_over) << " i3+3=" << fixed4(i3->pat_over);
    v.require(hi->pcs > i3->pcs, "pcs ordering");
    v.require(hi->pat_over < i3->pat_over, "pat_over ordering");
  });

  criterion("numerics", [](Verdict& v) {
    double worst = 0.0;
    for (double t : {0.01, 0.1, 0.25, 0.3, 0.35, 0.5, 0.77, 0.99}) {
      for (double a : {0.005, 0.5, 1.0, 2.0, 4.0, 7.5, 30.0}) {
        worst = std::max(worst, std::fabs(beta_tail({a, 1.0}, t) - (1.0 - std::pow(t, a))));
        worst = std::max(worst, std::fabs(beta_tail({1.0, a}, t) - std::pow(1.0 - t, a)));
      }
      worst = std::max(worst, std::fabs(beta_tail({2.0, 2.0}, t) - (1.0 - (3 * t * t - 2 * t * t * t))));
    }
    v.detail << " beta_tail max err " << worst;
    v.require(worst <= 1e-10, "beta_tail closed forms");

    long sequences = 0;
    bool pava_ok = true;
    for (std::size_t n = 1; n <= 6 && pava_ok; ++n) {
      std::vector<int> digits(n, 0);
      while (true) {
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = digits[i] / 10.0;
        const auto fast = isotonic_regression(y);
        const auto slow = oracle::isotonic_brute_force(y);
        double sum_in = 0.0;
        double sum_out = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          pava_ok = pava_ok && std::fabs(fast[i] - slow[i]) <= 1e-12;
          sum_in += y[i];
          sum_out += fast[i];
        }
        pava_ok = pava_ok && std::fabs(sum_in - sum_out) <= 1e-12 && isotonic_regression(fast) == fast;
        ++sequences;
        std::size_t k = 0;
        while (k < n && ++digits[k] == 11) digits[k++] = 0;
        if (k == n || !pava_ok) break;
      }
    }
    v.detail << "; PAVA " << sequences << " grid sequences";
    v.require(pava_ok, "PAVA brute force, idempotence, mean preservation");

    const DesignParams dp = defaults();
    std::mt19937_64 gen(kSeed);
    std::uniform_real_distribution<double> m_dist(0.01, 30.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool rows_ok = true;
    for (int rep = 0; rep < 100; ++rep) {
      const double m = m_dist(gen);
      const double a = m * u(gen);
      const auto t = build_table(0, DosePrior{a, m, a / m, 1.0}, dp);
      for (int n = 1; n <= dp.table_cap; ++n)
        for (int x = 1; x <= n; ++x) rows_ok = rows_ok && aggressiveness(t.at(n, x)) <= aggressiveness(t.at(n, x - 1));
    }
    v.detail << "; 100 random-prior tables";
    v.require(rows_ok, "row monotonicity");
  });

  criterion("determinism", [](Verdict& v) {
    const std::string dir = HI3_SAMPLES_DIR;
    RunConfig sim = load_config(dir + "/scenario2.json");
    sim.reps = 500;
    RunConfig random = load_config(dir + "/random.json");
    random.random_scenarios = 5;
    random.reps = 100;
    const RunConfig figure = load_config(dir + "/reference-history.json");
    const RunConfig decide = load_config(dir + "/decide.json");
    const std::vector<std::pair<std::string, std::function<CommandOutput()>>> runs{
        {"calibrate", [&] { return cmd_calibrate(figure, 7); }},
        {"tables", [&] { return cmd_tables(figure, 7); }},
        {"simulate", [&] { return cmd_simulate(sim, 7); }},
        {"simulate-random", [&] { return cmd_simulate(random, 7); }},
        {"decide", [&] { return cmd_decide(decide, 7); }},
        {"select-mtd", [&] { return cmd_select_mtd(decide, 7); }},
    };
    for (const auto& [name, run] : runs) {
      const CommandOutput a = run();
      const CommandOutput b = run();
      v.require(a.text == b.text && a.files == b.files, name);
    }
    v.detail << " " << runs.size() << " commands repeated byte-identically";
  });

  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
