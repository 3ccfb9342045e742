#pragma once

// Domain types and the elementary two-group mixture mathematics: logistic
// null probability, censored-Bernoulli component weights and the censored
// quasi log-likelihood.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "camt/numeric.hpp"

namespace camt {

// ============================================================================
// HYPOTHESIS TABLE
// ============================================================================

// p-values plus a row-major covariate matrix whose column 0 is the intercept.
// Real selects the covariate storage precision (float halves memory for very
// large tables); all arithmetic is done in double.
template <class Real = double>
class BasicHypothesisTable {
 public:
  using value_type = Real;

  BasicHypothesisTable() = default;

  // covariates: m rows x (d + 1) columns, column 0 identically 1.
  BasicHypothesisTable(std::vector<std::string> ids, std::vector<double> pvalues,
                       std::vector<Real> covariates, std::size_t d)
      : ids_(std::move(ids)),
        pvalues_(std::move(pvalues)),
        covariates_(std::move(covariates)),
        d_(d) {
    validate();
  }

  // Builds a table from user covariates (m x d, row-major) and prepends the
  // intercept column.
  static BasicHypothesisTable with_intercept(std::vector<std::string> ids,
                                             std::vector<double> pvalues,
                                             std::span<const double> user_covariates,
                                             std::size_t d) {
    const std::size_t m = pvalues.size();
    if (user_covariates.size() != m * d) {
      throw ContractViolation("covariate matrix must have m * d entries");
    }
    std::vector<Real> cov(m * (d + 1));
    for (std::size_t i = 0; i < m; ++i) {
      cov[i * (d + 1)] = Real(1);
      for (std::size_t j = 0; j < d; ++j) {
        cov[i * (d + 1) + 1 + j] = static_cast<Real>(user_covariates[i * d + j]);
      }
    }
    return BasicHypothesisTable(std::move(ids), std::move(pvalues), std::move(cov), d);
  }

  std::size_t m() const { return pvalues_.size(); }
  std::size_t d() const { return d_; }
  std::size_t cols() const { return d_ + 1; }

  // May be empty, in which case rows are identified by 1-based position.
  const std::vector<std::string>& ids() const { return ids_; }
  std::string id(std::size_t i) const {
    return ids_.empty() ? std::to_string(i + 1) : ids_[i];
  }
  const std::vector<double>& pvalues() const { return pvalues_; }
  double pvalue(std::size_t i) const { return pvalues_[i]; }
  const std::vector<Real>& covariates() const { return covariates_; }
  std::span<const Real> row(std::size_t i) const {
    return {covariates_.data() + i * cols(), cols()};
  }

  // Replaces the covariate matrix (same shape, intercept kept).
  void set_covariates(std::vector<Real> covariates) {
    std::swap(covariates_, covariates);
    try {
      validate();
    } catch (...) {
      std::swap(covariates_, covariates);
      throw;
    }
  }

  // Same covariates with replaced p-values (used by perturbation refits).
  BasicHypothesisTable with_pvalues(std::vector<double> pvalues) const {
    BasicHypothesisTable copy(*this);
    copy.pvalues_ = std::move(pvalues);
    copy.validate();
    return copy;
  }

 private:
  void validate() const {
    const std::size_t m = pvalues_.size();
    if (!ids_.empty() && ids_.size() != m) {
      throw ContractViolation("ids and pvalues differ in length");
    }
    if (covariates_.size() != m * cols()) {
      throw ContractViolation("covariate matrix must have m rows of d + 1 columns");
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double p = pvalues_[i];
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("p-value outside [0,1] at row " + std::to_string(i + 1));
      }
      if (covariates_[i * cols()] != Real(1)) {
        throw ContractViolation("covariate column 0 must be the intercept (all ones)");
      }
      for (std::size_t j = 1; j < cols(); ++j) {
        if (!std::isfinite(static_cast<double>(covariates_[i * cols() + j]))) {
          throw std::invalid_argument("non-finite covariate at row " + std::to_string(i + 1));
        }
      }
    }
  }

  std::vector<std::string> ids_;
  std::vector<double> pvalues_;
  std::vector<Real> covariates_;
  std::size_t d_ = 0;
};

using HypothesisTable = BasicHypothesisTable<double>;
using CompactHypothesisTable = BasicHypothesisTable<float>;

// ============================================================================
// PARAMETERS
// ============================================================================

// The compact parameter set: β in [-box, box]^(d+1), k in [k_min, k_max].
struct ParamBounds {
  double box = 15.0;
  double k_min = 0.001;
  double k_max = 0.999;

  void validate() const {
    if (!(box > 0.0)) throw std::invalid_argument("coefficient box must be positive");
    if (!(k_min > 0.0 && k_min < k_max && k_max < 1.0)) {
      throw std::invalid_argument("k bounds must satisfy 0 < k_min < k_max < 1");
    }
  }
  double clip_beta(double b) const { return std::clamp(b, -box, box); }
  double clip_k(double k) const { return std::clamp(k, k_min, k_max); }
};

struct MixtureParams {
  std::vector<double> beta;
  double k = 0.5;
};

// y_i = 1 iff p_i > gamma.
struct CensoredData {
  std::vector<std::uint8_t> y;
  double gamma = 0.5;
};

struct MixtureFit {
  MixtureParams params;
  double gamma = 0.5;
  std::vector<double> eta;        // linear predictors x_i'β
  std::vector<double> pi_tilde;   // logistic(eta)
  std::vector<double> pi_hat;     // winsorized pi_tilde
  double eps1 = 0.01;
  double eps2 = 0.99;
  std::vector<double> loglik_trace;
  bool converged = false;
  int iterations = 0;
  int em_maps = 0;                // E+M evaluations (1 per plain, 3 per accelerated iteration)
  std::vector<std::string> warnings;
};

// ============================================================================
// OPERATIONS
// ============================================================================

template <class Real>
double linear_predictor(std::span<const Real> x, std::span<const double> beta) {
  if (x.size() != beta.size()) {
    throw ContractViolation("covariate row and coefficient vector differ in length");
  }
  double eta = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) eta += static_cast<double>(x[j]) * beta[j];
  return eta;
}

// π(x) = 1 / (1 + exp(-x'β)).
template <class Real>
double logistic_pi(std::span<const Real> x, std::span<const double> beta) {
  return logistic(linear_predictor(x, beta));
}

inline double logistic_pi(const std::vector<double>& x, const std::vector<double>& beta) {
  return logistic_pi(std::span<const double>(x), std::span<const double>(beta));
}

inline CensoredData censor(std::span<const double> pvalues, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("censoring level gamma must lie in (0,1)");
  }
  CensoredData out;
  out.gamma = gamma;
  out.y.resize(pvalues.size());
  for (std::size_t i = 0; i < pvalues.size(); ++i) out.y[i] = pvalues[i] > gamma ? 1 : 0;
  return out;
}

inline std::size_t count_censored(const CensoredData& c) {
  std::size_t n = 0;
  for (auto v : c.y) n += v;
  return n;
}

struct BernoulliTerms {
  double b0;  // null:        (1-γ)^y γ^(1-y)
  double b1;  // alternative: (1-γ^k)^y γ^(k(1-y))
};

inline BernoulliTerms mixture_bernoulli_terms(int y, double gamma, double k) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(k > 0.0 && k <= 1.0)) throw std::invalid_argument("k must lie in (0,1]");
  if (y != 0) return {1.0 - gamma, -std::expm1(k * std::log(gamma))};
  return {gamma, std::pow(gamma, k)};
}

// Precomputed b0/b1 for y = 0 and y = 1.
struct BernoulliTable {
  BernoulliTerms y0;
  BernoulliTerms y1;
  BernoulliTable(double gamma, double k)
      : y0(mixture_bernoulli_terms(0, gamma, k)), y1(mixture_bernoulli_terms(1, gamma, k)) {}
  const BernoulliTerms& operator[](std::uint8_t y) const { return y ? y1 : y0; }
};

// log[π b0 + (1-π) b1] for one hypothesis with linear predictor eta.
inline double mixture_log_term(double eta, const BernoulliTerms& t) {
  return std::log(logistic(eta) * t.b0 + logistic(-eta) * t.b1);
}

// L_m(β, k) = Σ log[π(x_i) b0_i + (1-π(x_i)) b1_i], summed in fixed chunk order.
template <class Real>
double quasi_loglik(const BasicHypothesisTable<Real>& table, const CensoredData& censored,
                    const MixtureParams& params) {
  if (censored.y.size() != table.m()) {
    throw ContractViolation("censored indicators and table differ in length");
  }
  if (params.beta.size() != table.cols()) {
    throw ContractViolation("beta length must equal d + 1");
  }
  const BernoulliTable terms(censored.gamma, params.k);
  return deterministic_sum(table.m(), [&](std::size_t i) {
    const double eta = linear_predictor(table.row(i), std::span<const double>(params.beta));
    return mixture_log_term(eta, terms[censored.y[i]]);
  });
}

}  // namespace camt
