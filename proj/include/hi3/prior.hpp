#pragma once

#include <vector>

#include "hi3/params.hpp"
#include "hi3/stats.hpp"

namespace hi3 {

/// Isotonic-transformed power prior for one dose: beta(a_star, ess - a_star).
struct DosePrior {
  double a_star = 0.0;  ///< prior expected DLT count
  double ess = 0.0;     ///< dose-dependent effective sample size m_d
  double mean = 0.0;    ///< a_star / ess
  double omega = 0.0;

  /// Prior that contributes nothing to the decision fractions.
  static DosePrior none() { return {}; }
};

using PriorSet = std::vector<DosePrior>;

inline std::vector<BetaParams> raw_power_prior(const HistoricalData& hist, const PowerParams& w,
                                               const DesignParams& dp) {
  hist.validate();
  w.validate();
  if (w.omega.size() != hist.doses())
    throw validation_error("omega", "omega length differs from number of doses");
  std::vector<BetaParams> out;
  out.reserve(hist.doses());
  for (std::size_t d = 0; d < hist.doses(); ++d) {
    const double wd = w.omega[d];
    out.push_back({wd * hist.dlt[d] + dp.a0, wd * (hist.patients[d] - hist.dlt[d]) + dp.b0});
  }
  return out;
}

inline PriorSet transformed_prior(const HistoricalData& hist, const PowerParams& w,
                                  const DesignParams& dp) {
  const auto raw = raw_power_prior(hist, w, dp);
  std::vector<double> means;
  means.reserve(raw.size());
  for (const auto& b : raw) means.push_back(beta_mean(b));
  const auto iso = isotonic_regression(means);

  PriorSet out(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d) {
    // DESS is taken from the closed form rather than a+b so it is exact.
    const double ess = dp.a0 + dp.b0 + w.omega[d] * hist.patients[d];
    out[d] = {ess * iso[d], ess, iso[d], w.omega[d]};
  }
  return out;
}

/// Priors of the non-borrowing design: every omega is zero.
inline PriorSet vague_prior(std::size_t doses, const DesignParams& dp) {
  return transformed_prior(HistoricalData::empty(doses), PowerParams::uniform(doses, 0.0), dp);
}

}  // namespace hi3
