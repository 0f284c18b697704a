#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "hi3/decision.hpp"
#include "hi3/prior.hpp"
#include "hi3/stats.hpp"

namespace hi3 {

/// Which treated doses may be selected.
enum class MtdRule {
  /// Isotonic estimate under either prior at or below p_T + eps2.
  EstimateBound,
  /// Any dose not removed by the exclusion safety rule.
  NotExcluded,
};

enum class Design { Hi3, I3 };

inline std::string_view design_name(Design d) { return d == Design::Hi3 ? "hi3+3" : "i3+3"; }

/// Hi3+3 picks among doses still open after the exclusion rule; i3+3 keeps its
/// estimate bound.
inline MtdRule default_mtd_rule(Design d) {
  return d == Design::Hi3 ? MtdRule::NotExcluded : MtdRule::EstimateBound;
}

struct MtdResult {
  std::optional<std::size_t> selected;  ///< zero-based dose, or none
  std::vector<double> p_tilde_prior;    ///< isotonic posterior means, power prior (NaN if untreated)
  std::vector<double> p_tilde_vague;    ///< isotonic posterior means, beta(a0, b0)
  std::vector<std::size_t> d_safe;   ///< candidate doses under the rule used
  MtdRule rule = MtdRule::EstimateBound;
};

/// End-of-trial selection. Posterior means under the power prior and the vague
/// prior are isotonised over treated doses only; the pick is the candidate
/// dose whose power-prior estimate is closest to p_T.
inline MtdResult select_mtd(const TrialState& state, const PriorSet& priors, const DesignParams& dp,
                            MtdRule rule = MtdRule::EstimateBound) {
  constexpr double kTieTol = 1e-9;
  const std::size_t doses = state.doses();
  if (priors.size() != doses) throw std::invalid_argument("select_mtd: prior count mismatch");

  MtdResult r;
  r.rule = rule;
  r.p_tilde_prior.assign(doses, std::numeric_limits<double>::quiet_NaN());
  r.p_tilde_vague.assign(doses, std::numeric_limits<double>::quiet_NaN());

  std::vector<std::size_t> treated;
  std::vector<double> m1;
  std::vector<double> m2;
  for (std::size_t d = 0; d < doses; ++d) {
    if (state.patients[d] <= 0) continue;
    const double x = state.dlt[d];
    const double n = state.patients[d];
    treated.push_back(d);
    m1.push_back((x + priors[d].a_star) / (n + priors[d].ess));
    m2.push_back((x + dp.a0) / (n + dp.a0 + dp.b0));
  }
  if (treated.empty()) return r;

  const auto iso1 = isotonic_regression(m1);
  const auto iso2 = isotonic_regression(m2);
  const double upper = dp.ei_upper();
  for (std::size_t i = 0; i < treated.size(); ++i) {
    const std::size_t d = treated[i];
    r.p_tilde_prior[d] = iso1[i];
    r.p_tilde_vague[d] = iso2[i];
    const bool eligible = rule == MtdRule::EstimateBound ? (iso1[i] <= upper || iso2[i] <= upper)
                                                         : !state.excluded[d];
    if (eligible) r.d_safe.push_back(d);
  }
  if (r.d_safe.empty()) return r;

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t d : r.d_safe) best = std::min(best, std::fabs(r.p_tilde_prior[d] - dp.p_target));

  // Ties: the highest tied dose at or below target, else the lowest tied dose.
  std::optional<std::size_t> lowest;
  std::optional<std::size_t> highest_at_or_below;
  for (std::size_t d : r.d_safe) {
    if (std::fabs(r.p_tilde_prior[d] - dp.p_target) > best + kTieTol) continue;
    if (!lowest) lowest = d;
    if (r.p_tilde_prior[d] <= dp.p_target + kTieTol) highest_at_or_below = d;
  }
  r.selected = highest_at_or_below ? highest_at_or_below : lowest;
  return r;
}

}  // namespace hi3
