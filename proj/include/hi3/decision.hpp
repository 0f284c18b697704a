#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hi3/params.hpp"
#include "hi3/prior.hpp"
#include "hi3/stats.hpp"

namespace hi3 {

enum class Decision { Escalate, Stay, DeEscalate, DeEscalateUnacceptable, TerminateTrial };

inline std::string_view symbol(Decision d) {
  switch (d) {
    case Decision::Escalate: return "E";
    case Decision::Stay: return "S";
    case Decision::DeEscalate: return "D";
    case Decision::DeEscalateUnacceptable: return "DU";
    case Decision::TerminateTrial: return "TERMINATE";
  }
  return "?";
}

inline std::optional<Decision> parse_decision(std::string_view s) {
  if (s == "E") return Decision::Escalate;
  if (s == "S") return Decision::Stay;
  if (s == "D") return Decision::DeEscalate;
  if (s == "DU") return Decision::DeEscalateUnacceptable;
  if (s == "TERMINATE") return Decision::TerminateTrial;
  return std::nullopt;
}

/// Higher is more aggressive: E > S > D, with DU and termination at the bottom.
inline int aggressiveness(Decision d) {
  switch (d) {
    case Decision::Escalate: return 3;
    case Decision::Stay: return 2;
    case Decision::DeEscalate: return 1;
    default: return 0;
  }
}

namespace detail {

// Fractions are compared on a 1e-12 fixed-point grid so that cells sitting
// exactly on an interval endpoint resolve the same way on every platform.
using wide = __int128;
inline constexpr double kFixedScale = 1e12;
inline constexpr wide kFixedOne = 1'000'000'000'000;

inline wide to_fixed(double v) { return static_cast<wide>(std::llround(v * kFixedScale)); }

enum class Band { Below, Within, Above };

inline Band classify(wide numer, wide denom, const DesignParams& dp) {
  if (numer * kFixedOne < to_fixed(dp.ei_lower()) * denom) return Band::Below;
  if (numer * kFixedOne <= to_fixed(dp.ei_upper()) * denom) return Band::Within;
  return Band::Above;
}

}  // namespace detail

struct Fractions {
  double q1;  ///< (x + a*) / (n + m)
  double q2;  ///< (x + a* - 1) / (n + m)
};

inline Fractions decision_fractions(double x, double n, double a_star, double ess) {
  return {(x + a_star) / (n + ess), (x + a_star - 1.0) / (n + ess)};
}

/// Interval rule applied to the pseudo data (x + a_star, n + ess). The EI is
/// closed: a fraction equal to an endpoint counts as inside.
inline Decision core_decision(int x, int n, double a_star, double ess, const DesignParams& dp) {
  if (n < 1 || x < 0 || x > n) throw std::invalid_argument("core_decision: need n >= 1 and 0 <= x <= n");
  if (ess < 0.0 || a_star < 0.0 || a_star > ess + 1e-12)
    throw std::invalid_argument("core_decision: need 0 <= a_star <= m");
  using detail::Band;
  const detail::wide numer = detail::wide{x} * detail::kFixedOne + detail::to_fixed(a_star);
  const detail::wide denom = detail::wide{n} * detail::kFixedOne + detail::to_fixed(ess);
  switch (detail::classify(numer, denom, dp)) {
    case Band::Below: return Decision::Escalate;
    case Band::Within: return Decision::Stay;
    case Band::Above: break;
  }
  if (detail::classify(numer - detail::kFixedOne, denom, dp) == Band::Below) return Decision::Stay;
  return Decision::DeEscalate;
}

inline Decision core_decision(int x, int n, const DosePrior& prior, const DesignParams& dp) {
  return core_decision(x, n, prior.a_star, prior.ess, dp);
}

/// The non-borrowing i3+3 rule on (x/n, (x-1)/n).
inline Decision i3_decision(int x, int n, const DesignParams& dp) {
  return core_decision(x, n, 0.0, 0.0, dp);
}

/// Pr(p_d > p_T) under beta(x + a* + 1 - a0, n - x + m - a* + 1 - b0).
inline double safety_posterior(double x, double n, const DosePrior& prior, const DesignParams& dp) {
  const BetaParams post{x + prior.a_star + 1.0 - dp.a0,
                        n - x + prior.ess - prior.a_star + 1.0 - dp.b0};
  return beta_tail(post, dp.p_target);
}

struct TrialState {
  std::vector<int> dlt;
  std::vector<int> patients;
  std::size_t current = 0;  ///< zero-based dose index
  std::vector<bool> excluded;
  bool terminated = false;

  static TrialState start(std::size_t doses) {
    return {std::vector<int>(doses, 0), std::vector<int>(doses, 0), 0,
            std::vector<bool>(doses, false), false};
  }

  std::size_t doses() const { return patients.size(); }

  int total_patients() const {
    int total = 0;
    for (int n : patients) total += n;
    return total;
  }

  int total_dlt() const {
    int total = 0;
    for (int x : dlt) total += x;
    return total;
  }

  /// Highest dose still open for enrolment.
  std::size_t highest_open() const {
    std::size_t top = 0;
    for (std::size_t d = 0; d < excluded.size() && !excluded[d]; ++d) top = d;
    return top;
  }

  void record_cohort(std::size_t dose, int x, int n) {
    if (terminated) throw std::logic_error("trial already terminated");
    if (dose != current) throw std::invalid_argument("cohort dose differs from current dose");
    if (n < 1 || x < 0 || x > n) throw std::invalid_argument("cohort needs n >= 1 and 0 <= x <= n");
    dlt[dose] += x;
    patients[dose] += n;
  }

  void validate() const {
    const std::size_t d = patients.size();
    if (d == 0 || dlt.size() != d || excluded.size() != d)
      throw validation_error("state", "state vectors must be non-empty and of equal length");
    for (std::size_t i = 0; i < d; ++i) {
      if (patients[i] < 0 || dlt[i] < 0 || dlt[i] > patients[i])
        throw validation_error("state.x[" + std::to_string(i + 1) + "]", "need 0 <= x_d <= n_d");
      if (i > 0 && excluded[i - 1] && !excluded[i])
        throw validation_error("state.excluded", "exclusions must be upward-closed");
    }
    if (current >= d) throw validation_error("state.current_dose", "current dose out of range");
    if (excluded[current] && !terminated)
      throw validation_error("state.current_dose", "current dose is excluded");
  }

  bool operator==(const TrialState&) const = default;
};

/// Outcome of one call to next_action, kept for audit trails.
struct Action {
  Decision decision;
  Decision core;  ///< interval-rule decision before safety rules and boundary overrides
  std::size_t from;
  std::size_t to;
  Fractions fractions;
  double tail;  ///< safety posterior at the evaluated dose
};

/// Evaluate the data at the current dose and move the trial. Safety rule 2
/// (rule 1 at the lowest dose) is checked after every cohort.
inline Action next_action(TrialState& state, const PriorSet& priors, const DesignParams& dp) {
  if (state.terminated) throw std::logic_error("next_action: trial already terminated");
  if (priors.size() != state.doses()) throw std::invalid_argument("next_action: prior count mismatch");
  const std::size_t d = state.current;
  const int x = state.dlt[d];
  const int n = state.patients[d];
  if (n < 1) throw std::invalid_argument("next_action: current dose has no patients");

  const DosePrior& prior = priors[d];
  Action act{Decision::Stay, core_decision(x, n, prior, dp), d, d,
             decision_fractions(x, n, prior.a_star, prior.ess), safety_posterior(x, n, prior, dp)};

  if (act.tail > dp.xi) {
    for (std::size_t i = d; i < state.doses(); ++i) state.excluded[i] = true;
    if (d == 0) {
      state.terminated = true;
      act.decision = Decision::TerminateTrial;
      return act;
    }
    act.decision = Decision::DeEscalateUnacceptable;
    act.to = state.current = d - 1;
    return act;
  }

  act.decision = act.core;
  if (act.decision == Decision::Escalate &&
      (d + 1 >= state.doses() || state.excluded[d + 1])) {
    act.decision = Decision::Stay;
  } else if (act.decision == Decision::DeEscalate && d == 0) {
    act.decision = Decision::Stay;
  }
  if (act.decision == Decision::Escalate) act.to = d + 1;
  if (act.decision == Decision::DeEscalate) act.to = d - 1;
  state.current = act.to;
  return act;
}

/// Pretabulated decisions for one dose; cell (n, x) for 1 <= n <= cap,
/// 0 <= x <= n. Position-dependent overrides are not applied.
class DecisionTable {
 public:
  DecisionTable(std::size_t dose, int cap)
      : dose_(dose), cap_(cap), cells_(static_cast<std::size_t>(cap * (cap + 3) / 2), Decision::Stay) {
    if (cap < 1) throw std::invalid_argument("DecisionTable: cap must be positive");
  }

  std::size_t dose() const { return dose_; }
  int cap() const { return cap_; }

  Decision at(int n, int x) const { return cells_[index(n, x)]; }
  void set(int n, int x, Decision d) { cells_[index(n, x)] = d; }

  std::size_t count(Decision d) const {
    std::size_t c = 0;
    for (Decision cell : cells_) c += (cell == d);
    return c;
  }

  bool operator==(const DecisionTable&) const = default;

 private:
  std::size_t index(int n, int x) const {
    if (n < 1 || n > cap_ || x < 0 || x > n) throw std::out_of_range("DecisionTable: cell out of range");
    // rows 1..n-1 hold 2 + 3 + ... + n cells
    return static_cast<std::size_t>((n - 1) * (n + 2) / 2 + x);
  }

  std::size_t dose_;
  int cap_;
  std::vector<Decision> cells_;
};

inline DecisionTable build_table(std::size_t dose, const DosePrior& prior, const DesignParams& dp) {
  DecisionTable table(dose, dp.table_cap);
  for (int n = 1; n <= dp.table_cap; ++n) {
    for (int x = 0; x <= n; ++x) {
      const bool unacceptable = safety_posterior(x, n, prior, dp) > dp.xi;
      table.set(n, x, unacceptable ? Decision::DeEscalateUnacceptable : core_decision(x, n, prior, dp));
    }
  }
  return table;
}

inline std::vector<DecisionTable> build_tables(const PriorSet& priors, const DesignParams& dp) {
  std::vector<DecisionTable> out;
  out.reserve(priors.size());
  for (std::size_t d = 0; d < priors.size(); ++d) out.push_back(build_table(d, priors[d], dp));
  return out;
}

/// Reference i3+3 table: x/n rule with exclusion under beta(x + 1, n - x + 1).
inline DecisionTable i3_table(const DesignParams& dp) {
  DecisionTable table(0, dp.table_cap);
  for (int n = 1; n <= dp.table_cap; ++n) {
    for (int x = 0; x <= n; ++x) {
      const double tail = beta_tail({x + 1.0, n - x + 1.0}, dp.p_target);
      table.set(n, x, tail > dp.xi ? Decision::DeEscalateUnacceptable : i3_decision(x, n, dp));
    }
  }
  return table;
}

}  // namespace hi3
