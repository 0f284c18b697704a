#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hi3/decision.hpp"
#include "hi3/params.hpp"
#include "hi3/prior.hpp"
#include "hi3/rng.hpp"
#include "hi3/stats.hpp"

namespace hi3 {

/// Fraction of table cells (1 <= n <= cap, 0 <= x <= n) where the borrowing
/// decision is strictly more aggressive than the i3+3 decision.
inline double check_tolerability(const DosePrior& prior, const DesignParams& dp) {
  int aggressive = 0;
  int cells = 0;
  for (int n = 1; n <= dp.table_cap; ++n) {
    for (int x = 0; x <= n; ++x) {
      ++cells;
      if (aggressiveness(core_decision(x, n, prior, dp)) > aggressiveness(i3_decision(x, n, dp)))
        ++aggressive;
    }
  }
  return static_cast<double>(aggressive) / cells;
}

inline bool check_ceiling(double omega, double n0, const DesignParams& dp) {
  return dp.a0 + dp.b0 + omega * n0 <= dp.ess_cap;
}

/// The prior alone must not exclude the dose.
inline bool check_retaining(const DosePrior& prior, const DesignParams& dp) {
  return safety_posterior(0.0, 0.0, prior, dp) < dp.xi;
}

struct ConditionReport {
  double tolerability_fraction = 0.0;
  bool tolerability_ok = true;
  bool ceiling_ok = true;
  bool retaining_ok = true;

  bool all() const { return tolerability_ok && ceiling_ok && retaining_ok; }
};

inline ConditionReport check_conditions(const DosePrior& prior, double n0, const DesignParams& dp) {
  ConditionReport r;
  r.tolerability_fraction = check_tolerability(prior, dp);
  r.tolerability_ok = r.tolerability_fraction <= dp.alpha;
  r.ceiling_ok = check_ceiling(prior.omega, n0, dp);
  r.retaining_ok = check_retaining(prior, dp);
  return r;
}

/// Conditions for every dose of a fitted design.
inline std::vector<ConditionReport> check_conditions(const HistoricalData& hist, const PriorSet& priors,
                                                     const DesignParams& dp) {
  std::vector<ConditionReport> out;
  out.reserve(priors.size());
  for (std::size_t d = 0; d < priors.size(); ++d) out.push_back(check_conditions(priors[d], hist.patients[d], dp));
  return out;
}

struct CalibrationWorkspace {
  HistoricalData pseudo_hist;          ///< (x'_0d, n_0d)
  std::vector<std::size_t> observed;   ///< doses with n_0d > 0
  std::vector<double> p_prime;         ///< Step-1 pseudo rates, filled at every dose
  std::vector<double> omega_intermediate;
  std::vector<double> omega_final;
  std::vector<double> step2_means;     ///< prior means under the Step-2 weights
  std::vector<double> step3_means;     ///< isotonic Step-3 targets
  std::vector<bool> fell_back;         ///< dose needed the post-verification fallback
  std::uint64_t seed = 0;
};

struct Calibration {
  PowerParams omega;
  CalibrationWorkspace workspace;
};

namespace detail {

inline DosePrior pseudo_prior(double x, double n0, double omega, const DesignParams& dp) {
  const double a = x * omega + dp.a0;
  const double b = (n0 - x) * omega + dp.b0;
  return {a, a + b, a / (a + b), omega};
}

inline bool pseudo_feasible(double x, double n0, double omega, const DesignParams& dp) {
  return check_conditions(pseudo_prior(x, n0, omega, dp), n0, dp).all();
}

/// Largest omega in [0, 1] passing all conditions under the pseudo prior.
inline double max_feasible_omega(double x, double n0, const DesignParams& dp) {
  if (pseudo_feasible(x, n0, 1.0, dp)) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    (pseudo_feasible(x, n0, mid, dp) ? lo : hi) = mid;
  }
  if (pseudo_feasible(x, n0, lo, dp)) return lo;
  for (double w = std::floor(lo * 100.0) / 100.0; w > 0.0; w -= 0.01) {
    if (pseudo_feasible(x, n0, w, dp)) return w;
  }
  return 0.0;
}

}  // namespace detail

/// Three-step approximation of the largest per-dose power parameters that
/// satisfy alpha-tolerability, the K ceiling and retaining.
inline Calibration calibrate_omegas(const HistoricalData& hist, const DesignParams& dp, std::uint64_t seed) {
  dp.validate();
  hist.validate();
  const std::size_t doses = hist.doses();

  Calibration cal;
  CalibrationWorkspace& ws = cal.workspace;
  ws.seed = seed;
  ws.p_prime.assign(doses, 0.0);
  ws.omega_intermediate.assign(doses, 1.0);
  ws.fell_back.assign(doses, false);
  for (std::size_t d = 0; d < doses; ++d)
    if (hist.observed(d)) ws.observed.push_back(d);

  if (ws.observed.empty()) {
    ws.pseudo_hist = hist;
    ws.omega_final.assign(doses, 1.0);
    ws.step2_means.assign(doses, dp.a0 / (dp.a0 + dp.b0));
    ws.step3_means = ws.step2_means;
    cal.omega.omega = ws.omega_final;
    return cal;
  }

  // Step 1: isotonic pseudo rates on the observed doses; gaps drawn uniformly
  // between the neighbouring observed rates (0 and 1 beyond the ends).
  {
    std::vector<double> rates;
    for (std::size_t d : ws.observed) rates.push_back(hist.dlt[d] / hist.patients[d]);
    const auto iso = isotonic_regression(rates);
    for (std::size_t i = 0; i < ws.observed.size(); ++i) ws.p_prime[ws.observed[i]] = iso[i];

    Rng rng(seed);
    for (std::size_t d = 0; d < doses; ++d) {
      if (hist.observed(d)) continue;
      double lo = 0.0;
      double hi = 1.0;
      for (std::size_t e : ws.observed) {
        if (e < d) lo = ws.p_prime[e];
        if (e > d) {
          hi = ws.p_prime[e];
          break;
        }
      }
      ws.p_prime[d] = rng.uniform(lo, hi);
    }
  }
  ws.pseudo_hist = HistoricalData::empty(doses);
  for (std::size_t d = 0; d < doses; ++d) {
    ws.pseudo_hist.patients[d] = hist.patients[d];
    ws.pseudo_hist.dlt[d] = hist.patients[d] * ws.p_prime[d];
  }

  // Step 2: per-dose bisection under the pseudo prior.
  ws.step2_means.assign(doses, 0.0);
  for (std::size_t d = 0; d < doses; ++d) {
    const double x = ws.pseudo_hist.dlt[d];
    const double n0 = hist.patients[d];
    if (hist.observed(d)) {
      ws.omega_intermediate[d] = detail::max_feasible_omega(x, n0, dp);
      ws.step2_means[d] = detail::pseudo_prior(x, n0, ws.omega_intermediate[d], dp).mean;
    } else {
      // An unobserved dose only carries the vague prior; its Step-1 rate stands
      // in so that gaps do not drag the isotonic fit towards 0.5.
      ws.step2_means[d] = ws.p_prime[d];
    }
  }

  // Step 3: isotonise the prior means and solve back for the weights.
  ws.step3_means = isotonic_regression(ws.step2_means);
  ws.omega_final.assign(doses, 1.0);
  for (std::size_t d : ws.observed) {
    const double target = ws.step3_means[d];
    const double denom = target * hist.patients[d] - ws.pseudo_hist.dlt[d];
    const double numer = dp.a0 - target * (dp.a0 + dp.b0);
    double w = std::fabs(denom) < 1e-12 || target == ws.step2_means[d] ? ws.omega_intermediate[d] : numer / denom;
    if (!std::isfinite(w)) w = ws.omega_intermediate[d];
    ws.omega_final[d] = std::clamp(w, 0.0, 1.0);
  }

  // Re-verify on the actual history. A failing dose first falls back to its
  // Step-2 weight, then steps down on a 0.01 grid.
  for (int round = 0; round < 200; ++round) {
    const PriorSet priors = transformed_prior(hist, PowerParams{ws.omega_final}, dp);
    bool clean = true;
    for (std::size_t d : ws.observed) {
      if (check_conditions(priors[d], hist.patients[d], dp).all()) continue;
      clean = false;
      if (!ws.fell_back[d]) {
        ws.fell_back[d] = true;
        if (ws.omega_final[d] > ws.omega_intermediate[d]) {
          ws.omega_final[d] = ws.omega_intermediate[d];
          continue;
        }
      }
      ws.omega_final[d] = std::max(0.0, std::floor(ws.omega_final[d] * 100.0 - 1e-9) / 100.0);
    }
    if (clean) break;
  }

  cal.omega.omega = ws.omega_final;
  return cal;
}

/// Calibrated priors ready for the trial.
inline PriorSet calibrated_priors(const HistoricalData& hist, const DesignParams& dp, std::uint64_t seed) {
  return transformed_prior(hist, calibrate_omegas(hist, dp, seed).omega, dp);
}

}  // namespace hi3
