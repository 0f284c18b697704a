#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hi3/calibration.hpp"
#include "hi3/decision.hpp"
#include "hi3/mtd.hpp"
#include "hi3/params.hpp"
#include "hi3/prior.hpp"
#include "hi3/rng.hpp"

namespace hi3 {

struct Scenario {
  std::vector<double> true_probs;
  std::string label;

  void validate() const {
    if (true_probs.empty()) throw validation_error("true_probs", "scenario needs at least one dose");
    for (std::size_t d = 0; d < true_probs.size(); ++d) {
      if (!(true_probs[d] >= 0.0 && true_probs[d] <= 1.0))
        throw validation_error("true_probs", "toxicity probabilities must lie in [0, 1]");
      if (d > 0 && true_probs[d] < true_probs[d - 1])
        throw validation_error("true_probs", "toxicity probabilities must be non-decreasing");
    }
  }
};

/// Doses scored as correct. `doses` empty means no dose is acceptable.
struct TrueMtd {
  std::vector<std::size_t> doses;

  bool none() const { return doses.empty(); }
  bool contains(std::size_t d) const { return std::find(doses.begin(), doses.end(), d) != doses.end(); }
};

/// Doses with true toxicity inside the closed EI; failing that, the dose
/// closest to p_T from below; no dose when all lie above the EI.
inline TrueMtd true_mtd(const Scenario& s, const DesignParams& dp) {
  TrueMtd t;
  for (std::size_t d = 0; d < s.true_probs.size(); ++d) {
    const double p = s.true_probs[d];
    if (p >= dp.ei_lower() - 1e-12 && p <= dp.ei_upper() + 1e-12) t.doses.push_back(d);
  }
  if (!t.doses.empty()) return t;
  std::optional<std::size_t> below;
  for (std::size_t d = 0; d < s.true_probs.size(); ++d)
    if (s.true_probs[d] < dp.p_target) below = d;
  if (below) t.doses.push_back(*below);
  return t;
}

struct TrialOutcome {
  TrialState state;
  MtdResult mtd;
};

/// One trial from dose 1 until max_n patients or early termination. A
/// terminated trial selects no dose.
inline TrialOutcome run_trial(const Scenario& scenario, const PriorSet& priors, const DesignParams& dp,
                              std::uint64_t seed, MtdRule rule = MtdRule::NotExcluded) {
  Rng rng(seed);
  TrialState state = TrialState::start(scenario.true_probs.size());
  while (!state.terminated && state.total_patients() < dp.max_n) {
    const int cohort = std::min(dp.cohort_size, dp.max_n - state.total_patients());
    const std::size_t d = state.current;
    state.record_cohort(d, rng.binomial(cohort, scenario.true_probs[d]), cohort);
    next_action(state, priors, dp);
  }
  TrialOutcome out{state, select_mtd(state, priors, dp, rule)};
  if (state.terminated) out.mtd.selected.reset();
  return out;
}

struct SimulationSummary {
  double pcs = 0.0;
  double sel_over = 0.0;
  double sel_under = 0.0;
  double none_sel = 0.0;
  double pat_at = 0.0;
  double pat_over = 0.0;
  double pat_under = 0.0;
  double tox = 0.0;
  double pcs_se = 0.0;  ///< binomial Monte Carlo standard error of pcs
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;

  bool operator==(const SimulationSummary&) const = default;
};

namespace detail {

struct TrialScore {
  double pcs = 0, sel_over = 0, sel_under = 0, none_sel = 0;
  double pat_at = 0, pat_over = 0, pat_under = 0, tox = 0;
};

inline TrialScore score_trial(const TrialOutcome& t, const TrueMtd& truth) {
  TrialScore s;
  const auto& sel = t.mtd.selected;
  if (truth.none()) {
    (sel ? s.sel_over : s.pcs) = 1.0;
  } else if (!sel) {
    s.none_sel = 1.0;
  } else if (truth.contains(*sel)) {
    s.pcs = 1.0;
  } else {
    (*sel > truth.doses.back() ? s.sel_over : s.sel_under) = 1.0;
  }

  const double total = t.state.total_patients();
  for (std::size_t d = 0; d < t.state.doses(); ++d) {
    const double share = t.state.patients[d] / total;
    if (truth.none() || d > truth.doses.back()) {
      s.pat_over += share;
    } else if (d < truth.doses.front()) {
      s.pat_under += share;
    } else {
      s.pat_at += share;
    }
  }
  s.tox = t.state.total_dlt() / total;
  return s;
}

inline unsigned worker_count(std::uint64_t reps) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::uint64_t>(hw, std::max<std::uint64_t>(1, reps / 256)));
}

}  // namespace detail

/// Monte Carlo operating characteristics of a design with fixed priors.
/// Replication r uses derive_seed(seed, r); results are reduced in
/// replication order, so the summary does not depend on the thread count.
inline SimulationSummary simulate_design(const Scenario& scenario, const PriorSet& priors, const DesignParams& dp,
                                         std::uint64_t reps, std::uint64_t seed, MtdRule rule) {
  if (reps < 1) throw std::invalid_argument("simulate: reps must be at least 1");
  scenario.validate();
  if (priors.size() != scenario.true_probs.size())
    throw std::invalid_argument("simulate: scenario and prior dose counts differ");
  const TrueMtd truth = true_mtd(scenario, dp);

  std::vector<detail::TrialScore> scores(reps);
  auto work = [&](std::uint64_t begin, std::uint64_t end) {
    for (std::uint64_t r = begin; r < end; ++r)
      scores[r] = detail::score_trial(run_trial(scenario, priors, dp, derive_seed(seed, r), rule), truth);
  };
  const unsigned workers = detail::worker_count(reps);
  if (workers == 1) {
    work(0, reps);
  } else {
    std::vector<std::jthread> pool;
    const std::uint64_t chunk = (reps + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::uint64_t b = w * chunk;
      pool.emplace_back(work, b, std::min(reps, b + chunk));
    }
  }

  SimulationSummary s;
  for (const auto& t : scores) {
    s.pcs += t.pcs;
    s.sel_over += t.sel_over;
    s.sel_under += t.sel_under;
    s.none_sel += t.none_sel;
    s.pat_at += t.pat_at;
    s.pat_over += t.pat_over;
    s.pat_under += t.pat_under;
    s.tox += t.tox;
  }
  const double n = static_cast<double>(reps);
  for (double* f : {&s.pcs, &s.sel_over, &s.sel_under, &s.none_sel, &s.pat_at, &s.pat_over, &s.pat_under, &s.tox})
    *f /= n;
  s.pcs_se = std::sqrt(s.pcs * (1.0 - s.pcs) / n);
  s.reps = reps;
  s.seed = seed;
  return s;
}

/// Seed stream reserved for calibration inside a batch.
inline std::uint64_t calibration_seed(std::uint64_t seed) { return derive_seed(seed, ~std::uint64_t{0}); }

/// Hi3+3: calibrate once from the history, then simulate. With an empty history
/// the dosing decisions are exactly those of i3+3.
inline SimulationSummary simulate_batch(const Scenario& scenario, const HistoricalData& hist, const DesignParams& dp,
                                        std::uint64_t reps, std::uint64_t seed) {
  if (hist.doses() != scenario.true_probs.size())
    throw std::invalid_argument("simulate: history and scenario dose counts differ");
  return simulate_design(scenario, calibrated_priors(hist, dp, calibration_seed(seed)), dp, reps, seed,
                         default_mtd_rule(Design::Hi3));
}

inline SimulationSummary simulate_i3(const Scenario& scenario, const DesignParams& dp, std::uint64_t reps,
                                     std::uint64_t seed) {
  return simulate_design(scenario, vague_prior(scenario.true_probs.size(), dp), dp, reps, seed,
                         default_mtd_rule(Design::I3));
}

inline std::vector<SimulationSummary> efficiency_sweep(const Scenario& scenario, const HistoricalData& hist,
                                                       DesignParams dp, const std::vector<int>& sizes,
                                                       std::uint64_t reps, std::uint64_t seed) {
  if (sizes.empty()) throw std::invalid_argument("efficiency_sweep: no sample sizes");
  const PriorSet priors = calibrated_priors(hist, dp, calibration_seed(seed));
  std::vector<SimulationSummary> out;
  for (int size : sizes) {
    dp.max_n = size;
    dp.validate();
    out.push_back(simulate_design(scenario, priors, dp, reps, seed, default_mtd_rule(Design::Hi3)));
  }
  return out;
}

/// One i3+3 trial under `truth` with `patients` patients; its per-dose counts
/// become the historical data.
inline HistoricalData generate_historical_data(const Scenario& truth, const DesignParams& dp, std::uint64_t seed,
                                               int patients = 30) {
  DesignParams hdp = dp;
  hdp.max_n = patients;
  const auto trial =
      run_trial(truth, vague_prior(truth.true_probs.size(), dp), hdp, seed, default_mtd_rule(Design::I3));
  HistoricalData h = HistoricalData::empty(truth.true_probs.size());
  for (std::size_t d = 0; d < h.doses(); ++d) {
    h.dlt[d] = trial.state.dlt[d];
    h.patients[d] = trial.state.patients[d];
  }
  return h;
}

/// Random monotone scenarios. The MTD location is uniform over the D doses
/// plus a no-MTD outcome; the MTD's probability is uniform in the EI and
/// neighbours move outward by gaps uniform on [0.02, 0.22] (mean 0.12), with
/// the adjacent doses pushed outside the EI.
inline std::vector<Scenario> generate_random_scenarios(std::size_t count, std::size_t doses, const DesignParams& dp,
                                                       std::uint64_t seed) {
  if (count < 1 || doses < 1) throw std::invalid_argument("generate_random_scenarios: count and D must be positive");
  constexpr double kFloor = 0.005;
  constexpr double kCeil = 0.995;
  const double lo = dp.ei_lower();
  const double hi = dp.ei_upper();
  auto gap = [](Rng& rng) { return rng.uniform(0.02, 0.22); };

  std::vector<Scenario> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, i));
    std::vector<double> p(doses);
    const std::size_t loc = rng.index(doses + 1);
    std::size_t anchor = loc;
    if (loc == doses) {
      anchor = 0;
      p[0] = std::min(kCeil, hi + rng.uniform(0.01, 0.2));
    } else {
      p[loc] = rng.uniform(lo, hi);
    }
    for (std::size_t d = anchor; d-- > 0;) {
      double v = p[d + 1] - gap(rng);
      if (d + 1 == loc && v >= lo) v = lo - rng.uniform(0.01, 0.1);
      if (v < kFloor) v = p[d + 1] * rng.uniform(0.3, 0.9);
      p[d] = v;
    }
    for (std::size_t d = anchor + 1; d < doses; ++d) {
      double v = p[d - 1] + gap(rng);
      if (d - 1 == loc && v <= hi) v = hi + rng.uniform(0.01, 0.1);
      if (v > kCeil) v = p[d - 1] + (1.0 - p[d - 1]) * rng.uniform(0.1, 0.7);
      p[d] = v;
    }
    out.push_back({std::move(p), "random-" + std::to_string(i + 1)});
  }
  return out;
}

/// One case of a random-scenario study: a truth, its own historical data and
/// the seed for its simulated trials.
struct StudyCase {
  Scenario scenario;
  HistoricalData history;
  std::uint64_t seed = 0;
};

/// Scenario truths come from stream 0 of `seed`, histories from stream 1 and
/// trial seeds from stream 2, so each ingredient is independent of the others.
inline std::vector<StudyCase> random_study(std::size_t count, std::size_t doses, const DesignParams& dp,
                                           std::uint64_t seed) {
  const auto scenarios = generate_random_scenarios(count, doses, dp, derive_seed(seed, 0));
  const std::uint64_t hist_stream = derive_seed(seed, 1);
  const std::uint64_t trial_stream = derive_seed(seed, 2);
  std::vector<StudyCase> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({scenarios[i], generate_historical_data(scenarios[i], dp, derive_seed(hist_stream, i)),
                   derive_seed(trial_stream, i)});
  }
  return out;
}

}  // namespace hi3
