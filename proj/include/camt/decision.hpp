#pragma once

// Turns a fitted mixture into rejections. With winsorized null probabilities
// π̂_i and censored indicators y_i, the global level is
//   τ̃ = k [Σ y_i / (α(1-γ)) ((1-π̂_i)/π̂_i)^(1/(1-k))]^(1-k),  τ̂ = max(τ̃, ε),
// the per-hypothesis thresholds are
//   t̂_i = [(1-π̂_i) k / (π̂_i τ̂)]^(1/(1-k)),
// and hypothesis i is rejected when p_i <= min(t̂_i, γ). Everything is
// evaluated in log space because the exponent 1/(1-k) reaches 1000.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camt/model.hpp"
#include "camt/numeric.hpp"

namespace camt {

struct EpsilonBundle {
  double eps1 = 0.01;      // lower winsorization bound for π̂
  double eps2 = 0.99;      // upper winsorization bound for π̂
  double epsilon = 1e-10;  // floor for τ̂

  void validate() const {
    if (!(eps1 >= 0.0 && eps1 < eps2 && eps2 <= 1.0)) {
      throw std::invalid_argument("winsorization bounds must satisfy 0 <= eps1 < eps2 <= 1");
    }
    if (!(epsilon >= 0.0)) throw std::invalid_argument("tau floor epsilon must be non-negative");
  }
};

struct TauPair {
  double tau_tilde = 0.0;
  double tau_hat = 0.0;
};

struct DecisionSet {
  double alpha = 0.05;
  double gamma = 0.5;
  double k = 0.5;
  EpsilonBundle eps;
  double tau_tilde = 0.0;
  double tau_hat = 0.0;
  std::vector<double> thresholds;
  std::vector<std::uint8_t> rejected;
  std::vector<double> weights;
  std::size_t n_rejected = 0;
  std::vector<std::string> warnings;
};

inline std::vector<double> winsorize_pi(std::span<const double> pi_tilde, double eps1, double eps2) {
  if (!(eps1 >= 0.0 && eps1 < eps2 && eps2 <= 1.0)) {
    throw std::invalid_argument("winsorization bounds must satisfy 0 <= eps1 < eps2 <= 1");
  }
  std::vector<double> out(pi_tilde.size());
  for (std::size_t i = 0; i < pi_tilde.size(); ++i) out[i] = std::clamp(pi_tilde[i], eps1, eps2);
  return out;
}

// log((1 - π̂)/π̂) for π̂ = clamp(logistic(eta), eps1, eps2), computed as the
// negated clamped linear predictor so that no precision is lost near 0 or 1.
inline double winsorized_log_odds_alt(double eta, double eps1, double eps2) {
  const double lo = eps1 > 0.0 ? logit(eps1) : -std::numeric_limits<double>::infinity();
  const double hi = eps2 < 1.0 ? logit(eps2) : std::numeric_limits<double>::infinity();
  return -std::clamp(eta, lo, hi);
}

inline double log_odds_alt_from_pi(double pi_hat) { return std::log1p(-pi_hat) - std::log(pi_hat); }

namespace detail {

inline void check_decision_ranges(double k, double alpha, double gamma, double epsilon) {
  if (!(k > 0.0 && k < 1.0)) throw std::invalid_argument("k must lie in (0,1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be non-negative");
}

// log Σ_{y_i = 1} exp(log_r_i / (1 - k)); -inf when no y_i = 1.
inline double log_censored_weight_sum(std::span<const double> log_r, std::span<const std::uint8_t> y,
                                      double k) {
  const double scale = 1.0 / (1.0 - k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_r.size(); ++i) {
    if (y[i]) top = std::max(top, log_r[i] * scale);
  }
  if (!std::isfinite(top)) return top;
  const double s = deterministic_sum(log_r.size(), [&](std::size_t i) {
    return y[i] ? std::exp(log_r[i] * scale - top) : 0.0;
  });
  return top + std::log(s);
}

}  // namespace detail

// τ̃ and τ̂ from the log odds log((1-π̂_i)/π̂_i).
inline TauPair compute_tau_log_odds(std::span<const double> log_r, std::span<const std::uint8_t> y,
                                    double k, double alpha, double gamma, double epsilon) {
  detail::check_decision_ranges(k, alpha, gamma, epsilon);
  if (log_r.size() != y.size()) throw ContractViolation("pi_hat and y differ in length");
  TauPair out;
  const double log_sum = detail::log_censored_weight_sum(log_r, y, k);
  if (std::isfinite(log_sum)) {
    out.tau_tilde =
        std::exp(std::log(k) + (1.0 - k) * (log_sum - std::log(alpha) - std::log1p(-gamma)));
  }
  out.tau_hat = std::max(out.tau_tilde, epsilon);
  return out;
}

inline TauPair compute_tau(std::span<const double> pi_hat, std::span<const std::uint8_t> y, double k,
                           double alpha, double gamma, double epsilon) {
  std::vector<double> log_r(pi_hat.size());
  for (std::size_t i = 0; i < pi_hat.size(); ++i) {
    if (!(pi_hat[i] > 0.0 && pi_hat[i] < 1.0)) {
      throw std::invalid_argument("pi_hat must lie strictly inside (0,1)");
    }
    log_r[i] = log_odds_alt_from_pi(pi_hat[i]);
  }
  return compute_tau_log_odds(log_r, y, k, alpha, gamma, epsilon);
}

// t̂ = [(1-π̂) k / (π̂ τ̂)]^(1/(1-k)) given log((1-π̂)/π̂).
inline double threshold_from_log_odds(double log_r, double k, double tau_hat) {
  return std::exp((log_r + std::log(k) - std::log(tau_hat)) / (1.0 - k));
}

// Weighted-Bonferroni weights w_i = e^{-η_i/(1-k)} / Σ_j y_j/(1-γ) e^{-η_j/(1-k)}, so
// that t̂_i = α w_i when eps1 = epsilon = 0 and eps2 = 1.
inline std::vector<double> bonferroni_weights(std::span<const double> eta,
                                              std::span<const std::uint8_t> y, double gamma,
                                              double k, std::vector<std::string>* warnings = nullptr) {
  if (eta.size() != y.size()) throw ContractViolation("eta and y differ in length");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(k > 0.0 && k < 1.0)) throw std::invalid_argument("k must lie in (0,1)");
  std::vector<double> neg_eta(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) neg_eta[i] = -eta[i];
  const double log_sum = detail::log_censored_weight_sum(neg_eta, y, k);
  std::vector<double> w(eta.size(), std::numeric_limits<double>::infinity());
  if (!std::isfinite(log_sum)) {
    if (warnings) warnings->push_back("no p-value exceeds gamma; Bonferroni weights are unbounded");
    return w;
  }
  for (std::size_t i = 0; i < eta.size(); ++i) {
    w[i] = std::exp(neg_eta[i] / (1.0 - k) - log_sum + std::log1p(-gamma));
  }
  return w;
}

inline std::vector<double> bonferroni_weights(const MixtureFit& fit, std::span<const std::uint8_t> y,
                                              double gamma, double k) {
  return bonferroni_weights(std::span<const double>(fit.eta), y, gamma, k);
}

// Fills thresholds, rejections and weights for a given τ̂.
template <class Real>
DecisionSet thresholds_and_reject(const BasicHypothesisTable<Real>& table, const MixtureFit& fit,
                                  const TauPair& tau, double alpha, const EpsilonBundle& eps) {
  eps.validate();
  const double k = fit.params.k;
  const double gamma = fit.gamma;
  detail::check_decision_ranges(k, alpha, gamma, eps.epsilon);
  if (fit.eta.size() != table.m()) throw ContractViolation("fit and table differ in length");

  DecisionSet out;
  out.alpha = alpha;
  out.gamma = gamma;
  out.k = k;
  out.eps = eps;
  out.tau_tilde = tau.tau_tilde;
  out.tau_hat = tau.tau_hat;

  const CensoredData censored = censor(table.pvalues(), gamma);
  const bool no_censored = count_censored(censored) == 0;
  if (no_censored) {
    out.warnings.push_back("no p-value exceeds gamma; tau falls to its floor and thresholds are capped at gamma");
  }
  out.thresholds.resize(table.m());
  out.rejected.resize(table.m());
  for (std::size_t i = 0; i < table.m(); ++i) {
    const double log_r = winsorized_log_odds_alt(fit.eta[i], eps.eps1, eps.eps2);
    double t = threshold_from_log_odds(log_r, k, tau.tau_hat);
    if (no_censored) t = std::min(t, gamma);
    out.thresholds[i] = t;
    out.rejected[i] = table.pvalue(i) <= std::min(t, gamma) ? 1 : 0;
    out.n_rejected += out.rejected[i];
  }
  out.weights = bonferroni_weights(std::span<const double>(fit.eta), censored.y, gamma, k);
  return out;
}

// compute_tau followed by thresholds_and_reject.
template <class Real>
DecisionSet decide(const BasicHypothesisTable<Real>& table, const MixtureFit& fit, double alpha,
                   const EpsilonBundle& eps = {}) {
  eps.validate();
  const CensoredData censored = censor(table.pvalues(), fit.gamma);
  std::vector<double> log_r(table.m());
  for (std::size_t i = 0; i < table.m(); ++i) {
    log_r[i] = winsorized_log_odds_alt(fit.eta[i], eps.eps1, eps.eps2);
  }
  const TauPair tau =
      compute_tau_log_odds(log_r, censored.y, fit.params.k, alpha, fit.gamma, eps.epsilon);
  return thresholds_and_reject(table, fit, tau, alpha, eps);
}

}  // namespace camt
