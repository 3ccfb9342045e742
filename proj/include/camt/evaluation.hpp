#pragma once

// Replicated simulation experiments (FWER with Wilson intervals, TPR with
// standard errors), the perturbation stability diagnostic
// |t̂_j(p_j -> 0) - t̂_j(p_j -> 1)| and the curvature function u(γ, k).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "camt/baselines.hpp"
#include "camt/decision.hpp"
#include "camt/estimation.hpp"
#include "camt/pipeline.hpp"
#include "camt/random.hpp"
#include "camt/simulation.hpp"

namespace camt {

// ============================================================================
// SCORING
// ============================================================================

// Outcome counts of one replicate: V false and S true rejections, U and T
// the non-rejected nulls and alternatives.
struct ReplicateScore {
  bool any_false = false;
  double tpr = 0.0;
  std::size_t V = 0, S = 0, U = 0, T = 0;
  std::size_t m0 = 0, m1 = 0, R = 0;
};

inline ReplicateScore score_replicate(std::span<const std::uint8_t> rejected,
                                      std::span<const std::uint8_t> truth) {
  if (rejected.size() != truth.size()) {
    throw ContractViolation("rejection and truth vectors differ in length");
  }
  ReplicateScore s;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool r = rejected[i] != 0;
    if (truth[i]) {
      ++s.m1;
      (r ? s.S : s.T)++;
    } else {
      ++s.m0;
      (r ? s.V : s.U)++;
    }
  }
  s.R = s.V + s.S;
  s.any_false = s.V >= 1;
  s.tpr = s.m1 == 0 ? 0.0 : static_cast<double>(s.S) / static_cast<double>(s.m1);
  return s;
}

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// 95% Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, std::min(center - half, p)), std::min(1.0, std::max(center + half, p))};
}

// ============================================================================
// EXPERIMENTS
// ============================================================================

enum class Method { kCamt, kBonferroni, kHolm, kWeightedBonferroni, kOracle };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kCamt: return "camt";
    case Method::kBonferroni: return "bonferroni";
    case Method::kHolm: return "holm";
    case Method::kWeightedBonferroni: return "weighted_bonferroni";
    case Method::kOracle: return "oracle";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  for (Method m : {Method::kCamt, Method::kBonferroni, Method::kHolm, Method::kWeightedBonferroni,
                   Method::kOracle}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + name + "'");
}

inline std::vector<Method> all_methods() {
  return {Method::kCamt, Method::kBonferroni, Method::kHolm, Method::kWeightedBonferroni,
          Method::kOracle};
}

struct EvaluationSummary {
  std::string method;
  double alpha = 0.05;
  std::size_t n_rep = 0;     // replicates that produced a result
  std::size_t n_failed = 0;  // replicates where the method threw
  double fwer_hat = 0.0;
  Interval fwer_ci;
  double tpr_hat = 0.0;
  double tpr_se = 0.0;
  double mean_rejections = 0.0;
};

struct ExperimentConfig {
  SimulationConfig sim;
  std::vector<Method> methods = all_methods();
  std::vector<double> alpha_grid = {0.05};
  std::size_t n_rep = 100;
  PipelineOptions camt;  // camt.seed is re-derived per replicate
};

struct ExperimentResult {
  std::vector<EvaluationSummary> summaries;  // method-major, then alpha
  std::vector<std::string> errors;           // one line per failed (replicate, method)

  const EvaluationSummary& find(Method method, double alpha) const {
    const std::string name = method_name(method);
    for (const auto& s : summaries) {
      if (s.method == name && std::abs(s.alpha - alpha) < 1e-12) return s;
    }
    throw std::out_of_range("no summary for " + name);
  }
};

namespace detail {

struct MethodOutcome {
  bool ok = false;
  ReplicateScore score;
};

// Outcomes for one replicate, indexed [method][alpha].
inline std::vector<std::vector<MethodOutcome>> run_replicate(const ExperimentConfig& config,
                                                             std::uint64_t r,
                                                             std::vector<std::string>& errors) {
  const auto study = simulate(config.sim, r);
  const auto& p = study.table.pvalues();
  const std::size_t nm = config.methods.size();
  const std::size_t na = config.alpha_grid.size();
  std::vector<std::vector<MethodOutcome>> out(nm, std::vector<MethodOutcome>(na));

  std::optional<CamtFit> camt;
  std::string camt_error;
  auto need_camt = [&] {
    if (camt || !camt_error.empty()) return;
    try {
      PipelineOptions opts = config.camt;
      opts.seed = mix_seed(config.sim.seed, r);
      camt = fit_camt(study.table, opts);
    } catch (const std::exception& e) {
      camt_error = e.what();
    }
  };

  for (std::size_t mi = 0; mi < nm; ++mi) {
    const Method method = config.methods[mi];
    for (std::size_t ai = 0; ai < na; ++ai) {
      const double alpha = config.alpha_grid[ai];
      try {
        Rejections rej;
        switch (method) {
          case Method::kBonferroni:
            rej = bonferroni(p, alpha);
            break;
          case Method::kHolm:
            rej = holm(p, alpha);
            break;
          case Method::kCamt:
          case Method::kWeightedBonferroni:
            need_camt();
            if (!camt) throw std::runtime_error(camt_error);
            if (method == Method::kCamt) {
              rej = decide(study.table, camt->fit, alpha, config.camt.eps).rejected;
            } else {
              rej = weighted_bonferroni(p, camt->fit.pi_hat, alpha);
            }
            break;
          case Method::kOracle:
            rej = oracle_reject(p, study.pi_true, config.sim.oracle_alternative(), alpha).rejected;
            break;
        }
        out[mi][ai] = {true, score_replicate(rej, study.truth)};
      } catch (const std::exception& e) {
        errors.push_back("replicate " + std::to_string(r) + " " + method_name(method) + ": " +
                         e.what());
      }
    }
  }
  return out;
}

}  // namespace detail

// Simulates n_rep replicates (stream r for replicate r), applies every method
// at every α to the same data and aggregates. Replicates run on
// thread_count() workers; aggregation is in replicate order.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.sim.validate();
  if (config.n_rep == 0) throw std::invalid_argument("n_rep must be positive");
  if (config.methods.empty()) throw std::invalid_argument("no methods requested");
  for (double a : config.alpha_grid) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("alpha values must lie in (0,1)");
  }
  const std::size_t nm = config.methods.size();
  const std::size_t na = config.alpha_grid.size();
  std::vector<std::vector<std::vector<detail::MethodOutcome>>> outcomes(config.n_rep);
  std::vector<std::vector<std::string>> errors(config.n_rep);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < config.n_rep; r = next++) {
      outcomes[r] = detail::run_replicate(config, r, errors[r]);
    }
  };
  // Inner reductions stay single-threaded while replicates run in parallel.
  const std::size_t workers = std::min(thread_count(), config.n_rep);
  if (workers <= 1) {
    worker();
  } else {
    const std::size_t saved = thread_count();
    set_thread_count(1);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    set_thread_count(saved);
  }

  ExperimentResult result;
  for (const auto& e : errors) result.errors.insert(result.errors.end(), e.begin(), e.end());
  for (std::size_t mi = 0; mi < nm; ++mi) {
    for (std::size_t ai = 0; ai < na; ++ai) {
      EvaluationSummary s;
      s.method = method_name(config.methods[mi]);
      s.alpha = config.alpha_grid[ai];
      std::size_t false_hits = 0;
      CompensatedSum tpr_sum, tpr_sq, rej_sum;
      for (std::size_t r = 0; r < config.n_rep; ++r) {
        const auto& o = outcomes[r][mi][ai];
        if (!o.ok) {
          ++s.n_failed;
          continue;
        }
        ++s.n_rep;
        false_hits += o.score.any_false ? 1 : 0;
        tpr_sum.add(o.score.tpr);
        tpr_sq.add(o.score.tpr * o.score.tpr);
        rej_sum.add(static_cast<double>(o.score.R));
      }
      if (s.n_rep > 0) {
        const double n = static_cast<double>(s.n_rep);
        s.fwer_hat = static_cast<double>(false_hits) / n;
        s.fwer_ci = wilson_interval(false_hits, s.n_rep);
        s.tpr_hat = tpr_sum.value() / n;
        s.mean_rejections = rej_sum.value() / n;
        if (s.n_rep > 1) {
          const double var = std::max(0.0, (tpr_sq.value() - n * s.tpr_hat * s.tpr_hat) / (n - 1.0));
          s.tpr_se = std::sqrt(var / n);
        }
      }
      result.summaries.push_back(s);
    }
  }
  return result;
}

// ============================================================================
// PERTURBATION DIAGNOSTIC
// ============================================================================

struct PerturbationOptions {
  double alpha = 0.05;
  PipelineOptions pipeline;         // pipeline.gamma is ignored; gamma is given
  bool recompute_init = true;       // false: reuse the unperturbed initializer
};

struct PerturbationResult {
  std::vector<std::size_t> indices;
  std::vector<double> difference;   // |t̂_j(p_j -> 0) - t̂_j(p_j -> 1)|, NaN when failed
  std::vector<std::uint8_t> failed;

  // Median over successful entries (NaN when none).
  double median() const {
    std::vector<double> ok;
    for (std::size_t i = 0; i < difference.size(); ++i) {
      if (!failed[i]) ok.push_back(difference[i]);
    }
    if (ok.empty()) return std::nan("");
    const std::size_t mid = ok.size() / 2;
    std::nth_element(ok.begin(), ok.begin() + static_cast<std::ptrdiff_t>(mid), ok.end());
    if (ok.size() % 2 == 1) return ok[mid];
    const double upper = ok[mid];
    const double lower = *std::max_element(ok.begin(), ok.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
  }
};

// Distinct indices drawn without replacement (partial Fisher-Yates).
inline std::vector<std::size_t> sample_indices(std::size_t m, std::size_t count, std::uint64_t seed) {
  count = std::min(count, m);
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const CounterRng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(m - i, 0, Stream::kSampling, i);
    std::swap(all[i], all[j]);
  }
  all.resize(count);
  return all;
}

namespace detail {

// The pipeline at a given γ: π^s at λ = γ and the small-p initializer.
template <class Real>
CamtFit starts_at_gamma(const BasicHypothesisTable<Real>& table, double gamma, const PipelineOptions& po) {
  CamtFit f;
  std::span<const double> p(table.pvalues());
  f.storey = storey_pi0_and_gamma(p, {gamma}, 1, po.seed);
  f.gamma = gamma;
  f.init = init_small_p(p, f.storey.pi_s, table.cols(), po.bounds);
  return f;
}

template <class Real>
double threshold_after_refit(const BasicHypothesisTable<Real>& table, double gamma, std::size_t j,
                             const PerturbationOptions& opts, const CamtFit* fixed_starts) {
  CamtFit f = fixed_starts ? *fixed_starts : starts_at_gamma(table, gamma, opts.pipeline);
  fit_from_starts(table, opts.pipeline, f);
  if (!f.fit.converged) throw EmFailure("EM did not converge on perturbed data");
  return decide(table, f.fit, opts.alpha, opts.pipeline.eps).thresholds[j];
}

}  // namespace detail

// For each j, refits with p_j set to 0 and to 1 and reports the change of the
// j-th threshold. Failed refits are flagged and reported as NaN.
template <class Real>
PerturbationResult perturbation_diagnostic(const BasicHypothesisTable<Real>& table, double gamma,
                                           const PerturbationOptions& opts,
                                           std::span<const std::size_t> j_sample) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  PerturbationResult out;
  std::optional<CamtFit> base;
  if (!opts.recompute_init) base = detail::starts_at_gamma(table, gamma, opts.pipeline);
  for (std::size_t j : j_sample) {
    if (j >= table.m()) throw std::out_of_range("perturbation index out of range");
    out.indices.push_back(j);
    try {
      std::vector<double> p = table.pvalues();
      p[j] = 0.0;
      const double t0 = detail::threshold_after_refit(table.with_pvalues(p), gamma, j, opts,
                                                      base ? &*base : nullptr);
      p[j] = 1.0;
      const double t1 = detail::threshold_after_refit(table.with_pvalues(p), gamma, j, opts,
                                                      base ? &*base : nullptr);
      out.difference.push_back(std::abs(t0 - t1));
      out.failed.push_back(0);
    } catch (const std::exception&) {
      out.difference.push_back(std::nan(""));
      out.failed.push_back(1);
    }
  }
  return out;
}

// ============================================================================
// CURVATURE FUNCTION u(γ, k)
// ============================================================================

// u(γ,k) = [2 a b - δ(γ + γ^k - 1)] / (a^2 b^2) with δ = γ - γ^k,
// a = 1 - γ + δ/2 and b = γ - δ/2.
inline double u_gamma_k(double gamma, double k) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("k must lie in [0,1]");
  const double gk = std::pow(gamma, k);
  const double delta = gamma - gk;
  const double a = 1.0 - gamma + 0.5 * delta;
  const double b = gamma - 0.5 * delta;
  return (2.0 * a * b - delta * (gamma + gk - 1.0)) / (a * a * b * b);
}

struct UMinimum {
  double k = 0.0;
  double u = 0.0;
};

// min over k in [0,1] of u(γ,k): grid search with the given step, then a
// golden-section refinement inside the neighbouring grid cells.
inline UMinimum u_min_over_k(double gamma, double step = 1e-3) {
  UMinimum best{0.0, u_gamma_k(gamma, 0.0)};
  const int n = static_cast<int>(std::lround(1.0 / step));
  for (int i = 1; i <= n; ++i) {
    const double k = std::min(1.0, i * step);
    const double u = u_gamma_k(gamma, k);
    if (u < best.u) best = {k, u};
  }
  double lo = std::max(0.0, best.k - step);
  double hi = std::min(1.0, best.k + step);
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = u_gamma_k(gamma, x1), f2 = u_gamma_k(gamma, x2);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = u_gamma_k(gamma, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = u_gamma_k(gamma, x2);
    }
  }
  const double k = 0.5 * (lo + hi);
  const double u = u_gamma_k(gamma, k);
  if (u < best.u) best = {k, u};
  return best;
}

}  // namespace camt
