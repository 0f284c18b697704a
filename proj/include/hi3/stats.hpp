#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hi3 {

class invalid_parameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BetaParams {
  double alpha;
  double beta;
};

inline void validate(const BetaParams& p) {
  if (!std::isfinite(p.alpha) || !std::isfinite(p.beta) || p.alpha <= 0.0 || p.beta <= 0.0) {
    throw invalid_parameter("beta shapes must be finite and positive, got (" +
                            std::to_string(p.alpha) + ", " + std::to_string(p.beta) + ")");
  }
}

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-12;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

// log of x^a (1-x)^b / B(a, b)
inline double beta_log_front(double a, double b, double x) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
         b * std::log1p(-x);
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(const BetaParams& p, double x) {
  validate(p);
  if (!(x >= 0.0 && x <= 1.0)) throw invalid_parameter("threshold outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double a = p.alpha;
  const double b = p.beta;
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(detail::beta_log_front(a, b, x)) * detail::beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 -
         std::exp(detail::beta_log_front(b, a, 1.0 - x)) *
             detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Pr(p > threshold) for p ~ beta(alpha, beta).
inline double beta_tail(const BetaParams& p, double threshold) {
  validate(p);
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw invalid_parameter("threshold outside [0, 1]");
  if (threshold == 0.0) return 1.0;
  if (threshold == 1.0) return 0.0;
  const double a = p.alpha;
  const double b = p.beta;
  // Evaluate whichever side the continued fraction handles directly, so the
  // small tail is never obtained by cancellation.
  if (threshold < (a + 1.0) / (a + b + 2.0)) {
    return 1.0 - std::exp(detail::beta_log_front(a, b, threshold)) *
                     detail::beta_continued_fraction(a, b, threshold) / a;
  }
  return std::exp(detail::beta_log_front(b, a, 1.0 - threshold)) *
         detail::beta_continued_fraction(b, a, 1.0 - threshold) / b;
}

inline double beta_mean(const BetaParams& p) {
  validate(p);
  return p.alpha / (p.alpha + p.beta);
}

/// Unweighted pool-adjacent-violators projection onto non-decreasing
/// sequences. Equal neighbours are not pooled.
inline std::vector<double> isotonic_regression(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("isotonic_regression: empty input");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("isotonic_regression: non-finite input");
  }

  struct Block {
    double sum;
    std::size_t count;
    double mean() const { return sum / static_cast<double>(count); }
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (double v : values) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
      const Block top = blocks.back();
      blocks.pop_back();
      blocks.back().sum += top.sum;
      blocks.back().count += top.count;
    }
  }

  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : blocks) out.insert(out.end(), b.count, b.mean());
  return out;
}

}  // namespace hi3
