#pragma once

// End-to-end procedure: choose γ (Storey bootstrap or fixed), initialise from
// small p-values, run EM and derive decisions at one or more FWER levels.
// EM is also started from (logit π^s, 0, ..., 0) and the fit with the larger
// quasi log-likelihood is kept: the small-p start can sit on the π -> 0 edge
// of the box, which is a fixed point of EM.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camt/decision.hpp"
#include "camt/estimation.hpp"
#include "camt/model.hpp"

namespace camt {

struct PipelineOptions {
  std::optional<double> gamma;  // empty: Storey bootstrap choice
  std::vector<double> lambda_grid = default_lambda_grid();
  int n_boot = 100;
  std::uint64_t seed = 1;
  EmOptions em;
  ParamBounds bounds;
  EpsilonBundle eps;
  bool multi_start = true;
};

struct CamtFit {
  StoreyResult storey;  // always computed: π^s feeds the initializer
  double gamma = 0.5;
  InitEstimate init;
  std::string start = "small_p";  // start of the retained fit: small_p | storey
  double start_loglik_small_p = 0.0;
  double start_loglik_storey = 0.0;  // NaN when not run
  MixtureFit fit;
  CensoredData censored;
};

// Runs EM from out.init and, with multi_start, from the Storey start; keeps
// the fit with the larger quasi log-likelihood. Needs out.storey, out.gamma
// and out.init.
template <class Real>
void fit_from_starts(const BasicHypothesisTable<Real>& table, const PipelineOptions& opts, CamtFit& out) {
  out.fit = fit_em(table, out.gamma, out.init, opts.em, opts.bounds);
  out.start = "small_p";
  out.start_loglik_small_p = out.fit.loglik_trace.back();
  out.start_loglik_storey = std::numeric_limits<double>::quiet_NaN();
  if (opts.multi_start) {
    InitEstimate storey_start = out.init;
    storey_start.beta0.assign(table.cols(), 0.0);
    storey_start.beta0[0] = opts.bounds.clip_beta(logit(std::clamp(out.storey.pi_s, 1e-3, 1.0 - 1e-3)));
    MixtureFit second = fit_em(table, out.gamma, storey_start, opts.em, opts.bounds);
    out.start_loglik_storey = second.loglik_trace.back();
    if (out.start_loglik_storey > out.start_loglik_small_p) {
      out.fit = std::move(second);
      out.start = "storey";
    }
  }
  apply_winsorization(out.fit, opts.eps.eps1, opts.eps.eps2);
  if (out.init.neutral) out.fit.warnings.push_back("no small p-values; neutral initializer used");
  out.censored = censor(table.pvalues(), out.gamma);
}

template <class Real>
CamtFit fit_camt(const BasicHypothesisTable<Real>& table, const PipelineOptions& opts) {
  opts.bounds.validate();
  opts.eps.validate();
  CamtFit out;
  std::span<const double> p(table.pvalues());
  if (opts.gamma) {
    // π^s at λ = γ, no bootstrap needed.
    out.storey = storey_pi0_and_gamma(p, {*opts.gamma}, 1, opts.seed);
  } else {
    out.storey = storey_pi0_and_gamma(p, opts.lambda_grid, opts.n_boot, opts.seed);
  }
  out.gamma = out.storey.gamma;
  out.init = init_small_p(p, out.storey.pi_s, table.cols(), opts.bounds);
  fit_from_starts(table, opts, out);
  return out;
}

// ============================================================================
// COVARIATE STANDARDIZATION
// ============================================================================

struct Standardization {
  std::vector<double> center;  // per user covariate (median)
  std::vector<double> scale;   // IQR / 1.349, or 1 when the IQR vanishes
  std::vector<std::size_t> constant_columns;  // 1-based user covariate index
};

namespace detail {
inline double quantile_of(std::vector<double> v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}
}  // namespace detail

// Median-centres every user covariate and divides by an IQR-based robust
// scale. Constant columns are centred only and reported.
template <class Real>
Standardization standardize_covariates(BasicHypothesisTable<Real>& table) {
  Standardization s;
  const std::size_t m = table.m();
  const std::size_t c = table.cols();
  std::vector<Real> cov = table.covariates();
  std::vector<double> column(m);
  for (std::size_t j = 1; j < c; ++j) {
    for (std::size_t i = 0; i < m; ++i) column[i] = static_cast<double>(cov[i * c + j]);
    const double med = detail::quantile_of(column, 0.5);
    const double iqr = detail::quantile_of(column, 0.75) - detail::quantile_of(column, 0.25);
    const auto [mn, mx] = std::minmax_element(column.begin(), column.end());
    if (*mn == *mx) s.constant_columns.push_back(j);
    const double scale = iqr > 0.0 ? iqr / 1.349 : 1.0;
    s.center.push_back(med);
    s.scale.push_back(scale);
    for (std::size_t i = 0; i < m; ++i) {
      cov[i * c + j] = static_cast<Real>((column[i] - med) / scale);
    }
  }
  table.set_covariates(std::move(cov));
  return s;
}

}  // namespace camt
