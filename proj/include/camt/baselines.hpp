#pragma once

// Reference procedures: Bonferroni, Holm step-down, weighted Bonferroni with
// estimated null probabilities, and the oracle optimal rejection rule that
// knows the true π(x) and alternative p-value density f1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camt/numeric.hpp"

namespace camt {

using Rejections = std::vector<std::uint8_t>;

// ============================================================================
// ALTERNATIVE P-VALUE DENSITIES
// ============================================================================

class UnsupportedFamily : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class AlternativeFamily { kBeta, kNormalShift, kShiftedGamma };

// Densities of one-sided p-values p = 1 - Φ(z) under the alternative.
//   beta:          f1(p) = k p^(k-1)
//   normal_shift:  z ~ N(k_s, 1),                   f1(p) = φ(z - k_s)/φ(z)
//   shifted_gamma: z = k_s - √2 + Gamma(2, 1/√2),   f1(p) = g(z)/φ(z)
// with z = Φ^{-1}(1 - p). All three are non-increasing in p.
struct AlternativeSpec {
  AlternativeFamily family = AlternativeFamily::kBeta;
  double k = 0.5;
  double ks = 0.0;

  static AlternativeSpec beta(double k) { return {AlternativeFamily::kBeta, k, 0.0}; }
  static AlternativeSpec normal_shift(double ks) { return {AlternativeFamily::kNormalShift, 0.0, ks}; }
  static AlternativeSpec shifted_gamma(double ks) {
    return {AlternativeFamily::kShiftedGamma, 0.0, ks};
  }

  void validate() const {
    switch (family) {
      case AlternativeFamily::kBeta:
        if (!(k > 0.0 && k < 1.0)) throw std::invalid_argument("beta alternative needs k in (0,1)");
        break;
      case AlternativeFamily::kNormalShift:
      case AlternativeFamily::kShiftedGamma:
        if (!(ks >= 0.0)) throw std::invalid_argument("signal strength k_s must be non-negative");
        if (family == AlternativeFamily::kNormalShift && ks == 0.0) {
          throw UnsupportedFamily("normal shift with k_s = 0 is flat, not strictly decreasing");
        }
        break;
    }
  }
};

inline constexpr double kGammaScale = 0.70710678118654752440;  // 1/√2

inline double shifted_gamma_location(double ks) { return ks - kSqrt2; }

namespace detail {

// log of g(z)/φ(z) for the shifted gamma; -inf below the location.
inline double shifted_gamma_log_ratio(double z, double ks) {
  const double t = z - shifted_gamma_location(ks);
  if (!(t > 0.0)) return -std::numeric_limits<double>::infinity();
  const double log_g = std::log(t) - 2.0 * std::log(kGammaScale) - t / kGammaScale;
  const double log_phi = -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
  return log_g - log_phi;
}

}  // namespace detail

inline double f1_density(const AlternativeSpec& spec, double p) {
  spec.validate();
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("f1 is defined for p in (0,1]");
  switch (spec.family) {
    case AlternativeFamily::kBeta:
      return spec.k * std::pow(p, spec.k - 1.0);
    case AlternativeFamily::kNormalShift: {
      const double z = normal_upper_quantile(p);
      return std::exp(spec.ks * z - 0.5 * spec.ks * spec.ks);
    }
    case AlternativeFamily::kShiftedGamma:
      return std::exp(detail::shifted_gamma_log_ratio(normal_upper_quantile(p), spec.ks));
  }
  return 0.0;
}

// f1^{-1}(v): the p with f1(p) = v; 1 when v <= f1(1).
inline double f1_inverse(const AlternativeSpec& spec, double v) {
  spec.validate();
  if (!(v > 0.0)) throw std::invalid_argument("f1 inverse needs v > 0");
  if (std::isinf(v)) return 0.0;
  switch (spec.family) {
    case AlternativeFamily::kBeta: {
      if (v <= spec.k) return 1.0;
      return std::exp(std::log(v / spec.k) / (spec.k - 1.0));
    }
    case AlternativeFamily::kNormalShift: {
      // exp(k_s z - k_s^2/2) = v  <=>  z = (log v + k_s^2/2) / k_s
      const double z = (std::log(v) + 0.5 * spec.ks * spec.ks) / spec.ks;
      return normal_upper_tail(z);
    }
    case AlternativeFamily::kShiftedGamma: {
      // The log ratio is strictly increasing in z above the location, so
      // bisect in z (relative accuracy in p is then preserved in the tail).
      const double target = std::log(v);
      const double lo = shifted_gamma_location(spec.ks);
      double hi = std::max(lo, 0.0) + 1.0;
      while (detail::shifted_gamma_log_ratio(hi, spec.ks) < target && hi < 1e3) hi *= 2.0;
      const double z = bisect_increasing(
          [&](double x) { return detail::shifted_gamma_log_ratio(x, spec.ks); }, target, lo, hi,
          1e-13);
      return normal_upper_tail(z);
    }
  }
  return 1.0;
}

// ============================================================================
// ORACLE
// ============================================================================

struct OracleDecision {
  double tau = 0.0;
  double budget = 0.0;  // Σ π_i t_i
  std::vector<double> thresholds;
  Rejections rejected;
};

// τ* = min{τ > 0 : Σ π_i f1^{-1}(π_i τ / (1 - π_i)) <= α}, found by bisection
// in log τ; thresholds are capped at 1.
inline OracleDecision oracle_reject(std::span<const double> pvalues, std::span<const double> pi_true,
                                    const AlternativeSpec& spec, double alpha) {
  spec.validate();
  if (pvalues.size() != pi_true.size()) throw ContractViolation("pi_true and pvalues differ in length");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  for (double pi : pi_true) {
    if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("pi_true must lie in (0,1)");
  }
  const std::size_t m = pvalues.size();
  auto threshold = [&](std::size_t i, double tau) {
    return std::min(1.0, f1_inverse(spec, pi_true[i] * tau / (1.0 - pi_true[i])));
  };
  auto budget = [&](double tau) {
    return deterministic_sum(m, [&](std::size_t i) { return pi_true[i] * threshold(i, tau); });
  };

  double lo = 1e-12;
  double hi = 1e12;
  while (budget(hi) > alpha) hi *= 1e3;
  double tau = hi;
  if (budget(lo) <= alpha) {
    tau = lo;
  } else {
    double log_lo = std::log(lo), log_hi = std::log(hi);
    while (log_hi - log_lo > 1e-12) {
      const double mid = 0.5 * (log_lo + log_hi);
      if (budget(std::exp(mid)) <= alpha) {
        log_hi = mid;
      } else {
        log_lo = mid;
      }
    }
    tau = std::exp(log_hi);
  }
  OracleDecision out;
  out.tau = tau;
  out.thresholds.resize(m);
  out.rejected.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.thresholds[i] = threshold(i, tau);
    out.rejected[i] = pvalues[i] <= out.thresholds[i] ? 1 : 0;
  }
  out.budget = budget(tau);
  return out;
}

// ============================================================================
// CLASSICAL PROCEDURES
// ============================================================================

inline Rejections bonferroni(std::span<const double> pvalues, double alpha) {
  Rejections out(pvalues.size(), 0);
  if (pvalues.empty()) return out;
  const double cutoff = alpha / static_cast<double>(pvalues.size());
  for (std::size_t i = 0; i < pvalues.size(); ++i) out[i] = pvalues[i] <= cutoff ? 1 : 0;
  return out;
}

// Step-down: with p-values ordered ascending (ties by index), reject the
// first j-1 where j is the first rank with p_(j) > α / (m - j + 1).
inline Rejections holm(std::span<const double> pvalues, double alpha) {
  const std::size_t m = pvalues.size();
  Rejections out(m, 0);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
  for (std::size_t rank = 0; rank < m; ++rank) {
    if (pvalues[order[rank]] > alpha / static_cast<double>(m - rank)) break;
    out[order[rank]] = 1;
  }
  return out;
}

// Reject when p_i < α / (m π̂_i).
inline Rejections weighted_bonferroni(std::span<const double> pvalues, std::span<const double> pi_hat,
                                      double alpha) {
  if (pvalues.size() != pi_hat.size()) throw ContractViolation("pi_hat and pvalues differ in length");
  const auto m = static_cast<double>(pvalues.size());
  Rejections out(pvalues.size(), 0);
  for (std::size_t i = 0; i < pvalues.size(); ++i) {
    if (!(pi_hat[i] > 0.0 && pi_hat[i] <= 1.0)) throw std::invalid_argument("pi_hat must lie in (0,1]");
    out[i] = pvalues[i] < alpha / (m * pi_hat[i]) ? 1 : 0;
  }
  return out;
}

}  // namespace camt
