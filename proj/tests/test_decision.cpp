#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hi3/calibration.hpp"
#include "hi3/decision.hpp"
#include "oracles.hpp"

using namespace hi3;

namespace {

char letter(Decision d) { return symbol(d)[0]; }

DesignParams half_design() {
  DesignParams dp;
  dp.a0 = 0.5;
  dp.b0 = 0.5;
  return dp;
}

PriorSet worked_priors() {
  return transformed_prior({{1, 0, 0, 2, 3}, {6, 3, 3, 6, 3}}, PowerParams::uniform(5, 1.0), half_design());
}

HistoricalData reference_history() { return {{0, 1, 1, 2, 3}, {3, 6, 6, 9, 6}}; }

DosePrior random_prior(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> m_dist(0.01, 12.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double m = m_dist(gen);
  const double a = m * u(gen);
  return {a, m, a / m, 1.0};
}

}  // namespace

TEST(CoreDecision, DocumentedExamples) {
  DesignParams dp;
  EXPECT_EQ(core_decision(0, 3, 0.0, 0.0, dp), Decision::Escalate);
  EXPECT_EQ(core_decision(2, 3, 0.0, 0.0, dp), Decision::DeEscalate);
  EXPECT_EQ(core_decision(1, 3, 1.078, 7.0, dp), Decision::Escalate);
  const auto f = decision_fractions(1, 3, 1.078, 7.0);
  EXPECT_NEAR(f.q1, 0.2078, 1e-12);
  EXPECT_NEAR(f.q2, 0.1078, 1e-12);
}

TEST(CoreDecision, IntervalIsClosedAtBothEnds) {
  DesignParams dp;
  EXPECT_EQ(core_decision(1, 4, 0.0, 0.0, dp), Decision::Stay);   // exactly 0.25
  EXPECT_EQ(core_decision(7, 20, 0.0, 0.0, dp), Decision::Stay);  // exactly 0.35
  // q2 exactly at the lower endpoint is not below it
  EXPECT_EQ(core_decision(2, 4, 0.0, 0.0, dp), Decision::DeEscalate);
  // pseudo counts landing on an endpoint: (0 + 1) / (1 + 3) = 0.25
  EXPECT_EQ(core_decision(0, 1, 1.0, 3.0, dp), Decision::Stay);
}

TEST(CoreDecision, RejectsInvalidCells) {
  DesignParams dp;
  EXPECT_THROW(core_decision(0, 0, 0, 0, dp), std::invalid_argument);
  EXPECT_THROW(core_decision(4, 3, 0, 0, dp), std::invalid_argument);
  EXPECT_THROW(core_decision(0, 3, 2.0, 1.0, dp), std::invalid_argument);
}

TEST(CoreDecision, ZeroBorrowingIsTheExactIntervalRule) {
  DesignParams dp;
  for (int n = 1; n <= 60; ++n)
    for (int x = 0; x <= n; ++x)
      ASSERT_EQ(letter(core_decision(x, n, 0.0, 0.0, dp)), oracle::i3_rule_exact(x, n)) << x << "/" << n;
}

TEST(CoreDecision, MatchesPlainArithmeticAwayFromEndpoints) {
  DesignParams dp;
  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 200; ++rep) {
    const DosePrior p = random_prior(gen);
    for (int n = 1; n <= 15; ++n) {
      for (int x = 0; x <= n; ++x) {
        const double q1 = (x + p.a_star) / (n + p.ess);
        const double q2 = q1 - 1.0 / (n + p.ess);
        bool near_edge = false;
        for (double q : {q1, q2})
          for (double e : {dp.ei_lower(), dp.ei_upper()}) near_edge = near_edge || std::fabs(q - e) < 1e-9;
        if (near_edge) continue;
        ASSERT_EQ(letter(core_decision(x, n, p, dp)),
                  oracle::interval_rule(x, n, p.a_star, p.ess, dp.ei_lower(), dp.ei_upper()));
      }
    }
  }
}

TEST(SafetyPosterior, ClosedFormAndQuadrature) {
  DesignParams dp;
  dp.a0 = 1e-12;
  dp.b0 = 1e-12;
  EXPECT_NEAR(safety_posterior(3, 3, DosePrior::none(), dp), 0.9919, 1e-9);
  DesignParams half = half_design();
  const DosePrior p{1.078, 7.0, 1.078 / 7.0, 1.0};
  EXPECT_NEAR(safety_posterior(2, 3, p, half), oracle::beta_tail_quadrature(3.578, 7.422, 0.3), 1e-9);
}

TEST(SafetyPosterior, VaguePriorGivesUniformInitialPrior) {
  DesignParams dp;
  const PriorSet vague = vague_prior(1, dp);
  for (int n = 1; n <= 15; ++n)
    for (int x = 0; x <= n; ++x)
      EXPECT_NEAR(safety_posterior(x, n, vague[0], dp), beta_tail({x + 1.0, n - x + 1.0}, 0.3), 1e-13);
}

TEST(NextAction, TerminatesAtLowestDose) {
  DesignParams dp;
  const PriorSet pri = vague_prior(5, dp);
  TrialState s = TrialState::start(5);
  s.record_cohort(0, 3, 3);
  const Action a = next_action(s, pri, dp);
  EXPECT_EQ(a.decision, Decision::TerminateTrial);
  EXPECT_GT(a.tail, dp.xi);
  EXPECT_TRUE(s.terminated);
  for (bool e : s.excluded) EXPECT_TRUE(e);
  EXPECT_THROW(next_action(s, pri, dp), std::logic_error);
  EXPECT_THROW(s.record_cohort(0, 0, 3), std::logic_error);
}

TEST(NextAction, BoundaryOverrides) {
  DesignParams dp;
  const PriorSet pri = vague_prior(3, dp);

  TrialState top = TrialState::start(3);
  top.current = 2;
  top.record_cohort(2, 0, 3);
  Action a = next_action(top, pri, dp);
  EXPECT_EQ(a.core, Decision::Escalate);
  EXPECT_EQ(a.decision, Decision::Stay);
  EXPECT_EQ(top.current, 2u);

  TrialState excl = TrialState::start(3);
  excl.excluded = {false, true, true};
  excl.record_cohort(0, 0, 3);
  a = next_action(excl, pri, dp);
  EXPECT_EQ(a.core, Decision::Escalate);
  EXPECT_EQ(a.decision, Decision::Stay);

  TrialState bottom = TrialState::start(3);
  bottom.record_cohort(0, 2, 6);
  a = next_action(bottom, pri, dp);
  EXPECT_EQ(a.core, Decision::Stay);
  bottom.record_cohort(0, 2, 3);  // 4/9 > 0.35 and 3/9 >= 0.25, tail below xi
  a = next_action(bottom, pri, dp);
  EXPECT_EQ(a.core, Decision::DeEscalate);
  EXPECT_EQ(a.decision, Decision::Stay);
  EXPECT_EQ(bottom.current, 0u);
}

TEST(NextAction, UnacceptableDoseIsExcludedUpward) {
  DesignParams dp;
  const PriorSet pri = vague_prior(4, dp);
  TrialState s = TrialState::start(4);
  s.current = 2;
  s.record_cohort(2, 3, 3);
  const Action a = next_action(s, pri, dp);
  EXPECT_EQ(a.decision, Decision::DeEscalateUnacceptable);
  EXPECT_EQ(s.current, 1u);
  EXPECT_EQ(s.excluded, (std::vector<bool>{false, false, true, true}));
  EXPECT_FALSE(s.terminated);
  EXPECT_EQ(s.highest_open(), 1u);
}

TEST(NextAction, RequiresPatientsAtCurrentDose) {
  DesignParams dp;
  TrialState s = TrialState::start(2);
  EXPECT_THROW(next_action(s, vague_prior(2, dp), dp), std::invalid_argument);
  EXPECT_THROW(s.record_cohort(1, 0, 3), std::invalid_argument);
  EXPECT_THROW(s.record_cohort(0, 4, 3), std::invalid_argument);
}

TEST(NextAction, RandomWalksKeepInvariants) {
  DesignParams dp;
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<int> x_dist(0, 3);
  for (int rep = 0; rep < 2000; ++rep) {
    PriorSet pri(5);
    for (auto& p : pri) p = random_prior(gen);
    TrialState s = TrialState::start(5);
    for (int step = 0; step < 15 && !s.terminated; ++step) {
      const std::size_t before = s.current;
      s.record_cohort(s.current, x_dist(gen), 3);
      const Action a = next_action(s, pri, dp);
      ASSERT_LT(s.current, 5u);
      ASSERT_LE(s.current, before + 1);
      ASSERT_GE(s.current + 1, before);
      if (a.decision == Decision::Escalate) ASSERT_EQ(s.current, before + 1);
      if (a.decision == Decision::DeEscalate || a.decision == Decision::DeEscalateUnacceptable)
        ASSERT_EQ(s.current + 1, before);
      for (std::size_t d = 1; d < 5; ++d)
        if (s.excluded[d - 1]) ASSERT_TRUE(s.excluded[d]);
      if (!s.terminated) ASSERT_FALSE(s.excluded[s.current]);
      if (a.decision == Decision::TerminateTrial) ASSERT_EQ(before, 0u);
    }
  }
}

TEST(DecisionTables, ZeroBorrowingCells) {
  DesignParams dp;
  for (const auto& t : build_tables(vague_prior(5, dp), dp)) {
    EXPECT_EQ(t.at(3, 1), Decision::Stay);
    EXPECT_EQ(t.at(3, 3), Decision::DeEscalateUnacceptable);
    EXPECT_EQ(t.at(3, 0), Decision::Escalate);
  }
}

TEST(DecisionTables, ReducesToI3Exhaustively) {
  DesignParams dp;
  const auto i3 = i3_table(dp);
  // i3_table evaluates the x/n rule and the beta(x+1, n-x+1) tail directly.
  for (const auto& t : build_tables(vague_prior(5, dp), dp)) {
    for (int n = 1; n <= dp.table_cap; ++n)
      for (int x = 0; x <= n; ++x) ASSERT_EQ(t.at(n, x), i3.at(n, x)) << "dose " << t.dose() << " " << x << "/" << n;
  }
  for (int n = 1; n <= dp.table_cap; ++n) {
    for (int x = 0; x <= n; ++x) {
      const bool du = oracle::beta_tail_quadrature(x + 1.0, n - x + 1.0, 0.3) > dp.xi;
      const char expect = du ? 'U' : oracle::i3_rule_exact(x, n);
      const auto sym = symbol(i3.at(n, x));
      ASSERT_EQ(sym.size() == 2 ? 'U' : sym[0], expect) << x << "/" << n;
    }
  }
}

TEST(DecisionTables, WorkedExampleDoseFiveCell) {
  const DesignParams dp = half_design();
  const auto pri = worked_priors();
  EXPECT_NEAR(pri[4].a_star, 3.5, 1e-12);
  const auto t = build_table(4, pri[4], dp);
  const bool du = oracle::beta_tail_quadrature(4.0, 4.5, 0.3) > dp.xi;
  EXPECT_EQ(t.at(3, 0), du ? Decision::DeEscalateUnacceptable : Decision::DeEscalate);
}

TEST(DecisionTables, ReferenceHistoryTopDoseNeverEscalatesAtThree) {
  DesignParams dp;
  const auto pri = calibrated_priors(reference_history(), dp, 1);
  const auto t = build_table(4, pri[4], dp);
  for (int x = 0; x <= 3; ++x) EXPECT_NE(t.at(3, x), Decision::Escalate) << "x=" << x;
}

TEST(DecisionTables, RowMonotoneAndColumnCoherentForRandomPriors) {
  DesignParams dp;
  std::mt19937_64 gen(2024);
  for (int rep = 0; rep < 100; ++rep) {
    const DosePrior p = random_prior(gen);
    const auto t = build_table(0, p, dp);
    for (int n = 1; n <= dp.table_cap; ++n) {
      for (int x = 1; x <= n; ++x) ASSERT_LE(aggressiveness(t.at(n, x)), aggressiveness(t.at(n, x - 1)));
      if (n < dp.table_cap) {
        for (int x = 0; x <= n; ++x)
          if (t.at(n, x) == Decision::Stay) ASSERT_NE(t.at(n + 1, x), Decision::DeEscalateUnacceptable);
      }
    }
  }
}

TEST(DecisionTables, CellIndexingRoundTrips) {
  DecisionTable t(0, 6);
  int k = 0;
  const Decision all[] = {Decision::Escalate, Decision::Stay, Decision::DeEscalate, Decision::DeEscalateUnacceptable};
  for (int n = 1; n <= 6; ++n)
    for (int x = 0; x <= n; ++x) t.set(n, x, all[k++ % 4]);
  k = 0;
  for (int n = 1; n <= 6; ++n)
    for (int x = 0; x <= n; ++x) EXPECT_EQ(t.at(n, x), all[k++ % 4]);
  EXPECT_THROW(t.at(0, 0), std::out_of_range);
  EXPECT_THROW(t.at(3, 4), std::out_of_range);
  EXPECT_THROW(t.at(7, 0), std::out_of_range);
}

TEST(Symbols, ParseInvertsSymbol) {
  for (Decision d : {Decision::Escalate, Decision::Stay, Decision::DeEscalate, Decision::DeEscalateUnacceptable,
                     Decision::TerminateTrial})
    EXPECT_EQ(parse_decision(symbol(d)), d);
  EXPECT_FALSE(parse_decision("U").has_value());
}
