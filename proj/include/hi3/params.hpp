#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hi3 {

/// Thrown when a parameter set or data set breaks its invariants. `field`
/// names the offending input so front ends can report it.
class validation_error : public std::invalid_argument {
 public:
  validation_error(std::string field, const std::string& message)
      : std::invalid_argument(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct DesignParams {
  double p_target = 0.3;
  double eps1 = 0.05;
  double eps2 = 0.05;
  double xi = 0.95;
  double a0 = 0.005;
  double b0 = 0.005;
  double alpha = 0.1;  ///< alpha-tolerability bound
  double ess_cap = 9.0;  ///< K; +infinity disables the ceiling
  int cohort_size = 3;
  int max_n = 30;
  int table_cap = 15;

  double ei_lower() const { return p_target - eps1; }
  double ei_upper() const { return p_target + eps2; }

  void validate() const {
    auto fail = [](const char* field, const std::string& msg) {
      throw validation_error(field, msg);
    };
    if (!std::isfinite(p_target) || !std::isfinite(eps1) || !std::isfinite(eps2))
      fail("p_T", "target and interval half-widths must be finite");
    if (!(eps1 > 0.0)) fail("eps1", "eps1 must be positive");
    if (!(eps2 > 0.0)) fail("eps2", "eps2 must be positive");
    if (!(0.0 < ei_lower() && ei_lower() < ei_upper() && ei_upper() < 1.0))
      fail("p_T", "equivalence interval must satisfy 0 < p_T-eps1 < p_T+eps2 < 1");
    if (!(xi >= 0.5 && xi < 1.0)) fail("xi", "xi must lie in [0.5, 1)");
    if (!(a0 > 0.0 && std::isfinite(a0))) fail("a0", "a0 must be positive");
    if (!(b0 > 0.0 && std::isfinite(b0))) fail("b0", "b0 must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha", "alpha must lie in [0, 1]");
    if (!(ess_cap > a0 + b0)) fail("K", "K must exceed a0 + b0");
    if (cohort_size < 1) fail("cohort_size", "cohort size must be positive");
    if (max_n < 1) fail("max_n", "max_n must be positive");
    if (table_cap < 1) fail("table_cap", "table_cap must be positive");
  }
};

/// Per-dose historical DLT and patient counts. Doses missing from the
/// historical trial carry (0, 0). Counts may be fractional.
struct HistoricalData {
  std::vector<double> dlt;
  std::vector<double> patients;

  static HistoricalData empty(std::size_t doses) {
    return {std::vector<double>(doses, 0.0), std::vector<double>(doses, 0.0)};
  }

  std::size_t doses() const { return patients.size(); }
  bool observed(std::size_t d) const { return patients[d] > 0.0; }

  void validate() const {
    if (dlt.size() != patients.size()) throw validation_error("history", "x and n lengths differ");
    if (patients.empty()) throw validation_error("history", "history must cover at least one dose");
    for (std::size_t d = 0; d < patients.size(); ++d) {
      const std::string where = "history[" + std::to_string(d + 1) + "]";
      if (!std::isfinite(dlt[d]) || !std::isfinite(patients[d]) || dlt[d] < 0.0 ||
          patients[d] < 0.0)
        throw validation_error(where, where + ": counts must be finite and non-negative");
      if (dlt[d] > patients[d]) throw validation_error(where, where + ": x0d exceeds n0d");
    }
  }
};

/// Per-dose power parameters omega_0d in [0, 1].
struct PowerParams {
  std::vector<double> omega;

  static PowerParams uniform(std::size_t doses, double w) { return {std::vector<double>(doses, w)}; }

  void validate() const {
    for (std::size_t d = 0; d < omega.size(); ++d) {
      if (!(omega[d] >= 0.0 && omega[d] <= 1.0))
        throw validation_error("omega[" + std::to_string(d + 1) + "]", "omega must lie in [0, 1]");
    }
  }
};

inline constexpr double kUnboundedEss = std::numeric_limits<double>::infinity();

}  // namespace hi3
