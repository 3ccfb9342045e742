#pragma once

// Quasi-maximum-likelihood estimation of the censored mixture model:
// Storey bootstrap choice of the censoring level, a small-p-value
// initializer, and the EM iteration alternating an E step with a projected
// Newton (IRLS) update for β and a closed-form update for k.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "camt/model.hpp"
#include "camt/numeric.hpp"
#include "camt/random.hpp"

namespace camt {

// ============================================================================
// OPTIONS AND RESULTS
// ============================================================================

struct EmOptions {
  int max_iterations = 200;
  double tol = 1e-6;               // relative change in the quasi log-likelihood
  std::optional<double> fixed_k;   // when set, only β is updated
  int irls_max_iter = 25;
  double irls_tol = 1e-8;          // projected gradient norm
  bool accelerate = false;         // SQUAREM extrapolation, guarded to stay monotone

  void validate(const ParamBounds& bounds) const {
    if (max_iterations < 1 || irls_max_iter < 1) {
      throw std::invalid_argument("iteration limits must be positive");
    }
    if (!(tol > 0.0) || !(irls_tol > 0.0)) {
      throw std::invalid_argument("tolerances must be strictly positive");
    }
    if (fixed_k && !(*fixed_k >= bounds.k_min && *fixed_k <= bounds.k_max)) {
      throw std::invalid_argument("fixed k must lie within [k_min, k_max]");
    }
  }
};

struct InitEstimate {
  std::vector<double> beta0;
  double k0 = 0.5;
  double u = 1.0;
  std::size_t n_small = 0;
  double pi_s = 1.0;
  double pi0 = 0.5;        // fitted null proportion behind beta0[0]
  bool neutral = false;    // no small p-values: fell back to β = 0, k = 0.5
};

struct StoreyResult {
  double pi_s = 1.0;
  double gamma = 0.5;
  std::vector<double> lambda_grid;
  std::vector<double> pi_lambda;
  std::vector<double> mse;
};

inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  return grid;
}

// ============================================================================
// STOREY NULL PROPORTION AND CENSORING LEVEL
// ============================================================================

// π_λ = #{p > λ} / (m (1 - λ)), clipped to [1 / (m (1 - λ)), 1].
inline double storey_pi_lambda(std::size_t above, std::size_t m, double lambda) {
  const double denom = static_cast<double>(m) * (1.0 - lambda);
  return std::clamp(static_cast<double>(std::max<std::size_t>(above, 1)) / denom, 0.0, 1.0);
}

inline StoreyResult storey_pi0_and_gamma(std::span<const double> pvalues,
                                         std::vector<double> lambda_grid, int n_boot,
                                         std::uint64_t rng_seed) {
  const std::size_t m = pvalues.size();
  if (m == 0) throw std::invalid_argument("Storey estimate needs at least one p-value");
  if (lambda_grid.empty()) throw std::invalid_argument("lambda grid is empty");
  if (n_boot < 1) throw std::invalid_argument("bootstrap count must be positive");
  for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
    if (!(lambda_grid[l] > 0.0 && lambda_grid[l] < 1.0)) {
      throw std::invalid_argument("lambda grid values must lie in (0,1)");
    }
    if (l > 0 && !(lambda_grid[l] > lambda_grid[l - 1])) {
      throw std::invalid_argument("lambda grid must be strictly ascending");
    }
  }
  const std::size_t L = lambda_grid.size();

  // bin[i] = number of grid points strictly below p_i, so p_i > λ_l iff bin[i] > l.
  std::vector<std::uint8_t> bin(m);
  std::vector<std::size_t> hist(L + 1, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto it = std::lower_bound(lambda_grid.begin(), lambda_grid.end(), pvalues[i]);
    bin[i] = static_cast<std::uint8_t>(it - lambda_grid.begin());
    ++hist[bin[i]];
  }
  auto estimates = [&](const std::vector<std::size_t>& h) {
    std::vector<double> pi(L);
    std::size_t above = 0;
    for (std::size_t l = L; l-- > 0;) {
      above += h[l + 1];
      pi[l] = storey_pi_lambda(above, m, lambda_grid[l]);
    }
    return pi;
  };

  StoreyResult out;
  out.lambda_grid = lambda_grid;
  out.pi_lambda = estimates(hist);
  const double pi_min = *std::min_element(out.pi_lambda.begin(), out.pi_lambda.end());

  out.mse.assign(L, 0.0);
  if (L > 1) {
    const CounterRng rng(rng_seed);
    std::vector<std::size_t> boot_hist(L + 1);
    for (int b = 0; b < n_boot; ++b) {
      std::fill(boot_hist.begin(), boot_hist.end(), 0);
      for (std::size_t i = 0; i < m; ++i) {
        ++boot_hist[bin[rng.below(m, static_cast<std::uint64_t>(b), Stream::kBootstrap, i)]];
      }
      const auto pi_b = estimates(boot_hist);
      for (std::size_t l = 0; l < L; ++l) {
        const double diff = pi_b[l] - pi_min;
        out.mse[l] += diff * diff / n_boot;
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t l = 1; l < L; ++l) {
    if (out.mse[l] < out.mse[best]) best = l;
  }
  out.gamma = lambda_grid[best];
  out.pi_s = out.pi_lambda[best];
  return out;
}

// ============================================================================
// SMALL-P-VALUE INITIALIZER
// ============================================================================

// Conditional log-likelihood of the p-values below u under
// f(p) = π + (1-π) k p^(k-1), truncated to [0, u).
class SmallPObjective {
 public:
  SmallPObjective(std::span<const double> pvalues, double u) : u_(u), log_u_(std::log(u)) {
    for (double p : pvalues) {
      if (p < u) log_p_.push_back(std::log(std::max(p, 1e-300)));
    }
  }

  std::size_t n() const { return log_p_.size(); }

  double operator()(double pi, double k) const {
    CompensatedSum s;
    const double alt = (1.0 - pi) * k;
    for (double lp : log_p_) s.add(std::log(pi + alt * std::exp((k - 1.0) * lp)));
    const double mass = pi * u_ + (1.0 - pi) * std::exp(k * log_u_);
    return s.value() - static_cast<double>(n()) * std::log(mass);
  }

 private:
  double u_;
  double log_u_;
  std::vector<double> log_p_;
};

// Nelder-Mead maximisation in two dimensions.
inline std::array<double, 2> nelder_mead_maximize(
    const std::function<double(const std::array<double, 2>&)>& f, std::array<double, 2> start,
    double step, int max_evals = 400, double ftol = 1e-10) {
  using Point = std::array<double, 2>;
  std::array<Point, 3> simplex{start, Point{start[0] + step, start[1]},
                               Point{start[0], start[1] + step}};
  std::array<double, 3> value{};
  for (int i = 0; i < 3; ++i) value[i] = f(simplex[i]);
  int evals = 3;
  auto lerp = [](const Point& a, const Point& b, double t) {
    return Point{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
  };
  while (evals < max_evals) {
    // order best (largest) first
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return value[a] > value[b]; });
    const Point best = simplex[idx[0]], mid = simplex[idx[1]], worst = simplex[idx[2]];
    const double fb = value[idx[0]], fm = value[idx[1]], fw = value[idx[2]];
    if (std::abs(fb - fw) <= ftol * (1.0 + std::abs(fb))) break;
    const Point centroid{0.5 * (best[0] + mid[0]), 0.5 * (best[1] + mid[1])};
    const Point reflected = lerp(centroid, worst, -1.0);
    const double fr = f(reflected);
    ++evals;
    Point next = reflected;
    double fnext = fr;
    if (fr > fb) {
      const Point expanded = lerp(centroid, worst, -2.0);
      const double fe = f(expanded);
      ++evals;
      if (fe > fr) {
        next = expanded;
        fnext = fe;
      }
    } else if (fr <= fm) {
      const Point contracted = fr > fw ? lerp(centroid, reflected, 0.5) : lerp(centroid, worst, 0.5);
      const double fc = f(contracted);
      ++evals;
      if (fc > std::max(fr, fw)) {
        next = contracted;
        fnext = fc;
      } else {
        // shrink toward the best vertex
        simplex = {best, lerp(best, mid, 0.5), lerp(best, worst, 0.5)};
        value = {fb, f(simplex[1]), f(simplex[2])};
        evals += 2;
        continue;
      }
    }
    simplex = {best, mid, next};
    value = {fb, fm, fnext};
  }
  const auto it = std::max_element(value.begin(), value.end());
  return simplex[static_cast<std::size_t>(it - value.begin())];
}

struct SmallPFit {
  double pi = 0.5;
  double k = 0.5;
  double objective = 0.0;
  std::size_t n = 0;
};

// Maximises the conditional small-p likelihood over (π, k) ∈ (0,1)^2: a 50x50
// grid search followed by Nelder-Mead in logit coordinates.
inline SmallPFit fit_small_p_mixture(std::span<const double> pvalues, double u) {
  if (!(u > 0.0 && u <= 1.0)) throw std::invalid_argument("small-p cutoff must lie in (0,1]");
  const SmallPObjective objective(pvalues, u);
  SmallPFit out;
  out.n = objective.n();
  if (out.n == 0) return out;

  constexpr int kGrid = 50;
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < kGrid; ++a) {
    for (int b = 0; b < kGrid; ++b) {
      const double pi = (a + 0.5) / kGrid;
      const double k = (b + 0.5) / kGrid;
      const double v = objective(pi, k);
      if (v > best) {
        best = v;
        out.pi = pi;
        out.k = k;
      }
    }
  }
  auto in_logit = [&](const std::array<double, 2>& z) {
    const double v = objective(logistic(z[0]), logistic(z[1]));
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  const auto z = nelder_mead_maximize(in_logit, {logit(out.pi), logit(out.k)}, 0.1);
  const double refined = in_logit(z);
  if (refined >= best) {
    out.pi = logistic(z[0]);
    out.k = logistic(z[1]);
    best = refined;
  }
  out.objective = best;
  return out;
}

// Chooses the cutoff u as the ⌈m(1-π^s)⌉-th smallest p-value (the 1%
// quantile when π^s = 1), fits (π̃, k̃) on the p-values below u and returns
// β̃ = (logit π̃, 0, ..., 0).
inline InitEstimate init_small_p(std::span<const double> pvalues, double pi_s, std::size_t cols,
                                 const ParamBounds& bounds = {}) {
  const std::size_t m = pvalues.size();
  if (m == 0) throw std::invalid_argument("initializer needs at least one p-value");
  if (!(pi_s > 0.0 && pi_s <= 1.0)) throw std::invalid_argument("pi_s must lie in (0,1]");
  if (cols == 0) throw ContractViolation("design must have at least the intercept column");

  InitEstimate init;
  init.pi_s = pi_s;
  init.beta0.assign(cols, 0.0);

  std::vector<double> sorted(pvalues.begin(), pvalues.end());
  const double small_count = std::ceil(static_cast<double>(m) * (1.0 - pi_s) - 1e-9);
  std::size_t rank = 0;  // 0-based order statistic
  if (pi_s >= 1.0 || small_count < 1.0) {
    rank = static_cast<std::size_t>(std::floor(0.01 * static_cast<double>(m - 1)));
  } else {
    rank = std::min(m, static_cast<std::size_t>(small_count)) - 1;
  }
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end());
  init.u = std::clamp(sorted[rank], std::numeric_limits<double>::min(), 1.0);

  const SmallPFit fit = fit_small_p_mixture(pvalues, init.u);
  init.n_small = fit.n;
  if (fit.n == 0) {
    init.neutral = true;
    init.k0 = 0.5;
    init.pi0 = 0.5;
    return init;
  }
  init.pi0 = fit.pi;
  init.beta0[0] = bounds.clip_beta(logit(fit.pi));
  init.k0 = bounds.clip_k(fit.k);
  return init;
}

// ============================================================================
// E STEP
// ============================================================================

// Q_i = π_i b0_i / (π_i b0_i + (1 - π_i) b1_i), the posterior null probability.
template <class Real>
std::vector<double> e_step(const BasicHypothesisTable<Real>& table, const CensoredData& censored,
                           const MixtureParams& params) {
  if (params.beta.size() != table.cols()) throw ContractViolation("beta length must equal d + 1");
  if (censored.y.size() != table.m()) throw ContractViolation("censored data length mismatch");
  const BernoulliTable terms(censored.gamma, params.k);
  std::vector<double> q(table.m());
  const std::span<const double> beta(params.beta);
  parallel_for_chunks(table.m(), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double eta = linear_predictor(table.row(i), beta);
      const auto& t = terms[censored.y[i]];
      // Odds form of π b0 / (π b0 + (1-π) b1) with one exponential.
      const double e = std::exp(-std::abs(eta));
      q[i] = eta >= 0.0 ? t.b0 / (t.b0 + e * t.b1) : e * t.b0 / (e * t.b0 + t.b1);
    }
  });
  return q;
}

// ============================================================================
// M STEP FOR β
// ============================================================================

struct MStepResult {
  std::vector<double> beta;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;  // projected gradient at the returned β
  double objective = 0.0;
  bool ridge_used = false;
};

namespace detail {

// Weighted Bernoulli log-likelihood Σ Q_i log π_i + (1-Q_i) log(1-π_i) with
// π_i = logistic(x_i'β), written as Σ Q_i η_i - softplus(η_i).
template <class Real>
double weighted_bernoulli_loglik(const BasicHypothesisTable<Real>& table,
                                 std::span<const double> q, std::span<const double> beta) {
  return deterministic_sum(table.m(), [&](std::size_t i) {
    const double eta = linear_predictor(table.row(i), beta);
    return q[i] * eta - softplus(eta);
  });
}

struct NewtonPass {
  double objective;
  std::vector<double> gradient;
  Eigen::MatrixXd hessian;  // X'WX (negated Hessian)
};

template <class Real>
NewtonPass newton_pass(const BasicHypothesisTable<Real>& table, std::span<const double> q,
                       std::span<const double> beta) {
  const std::size_t c = table.cols();
  const std::size_t width = 1 + c + c * (c + 1) / 2;
  const auto acc = deterministic_vector_sum(
      table.m(), width, [&](std::size_t begin, std::size_t end, std::span<double> out) {
        std::vector<double> x(c);
        for (std::size_t i = begin; i < end; ++i) {
          const auto row = table.row(i);
          for (std::size_t j = 0; j < c; ++j) x[j] = static_cast<double>(row[j]);
          double eta = 0.0;
          for (std::size_t j = 0; j < c; ++j) eta += x[j] * beta[j];
          const double e = std::exp(-std::abs(eta));
          const double inv = 1.0 / (1.0 + e);
          const double pi = eta >= 0.0 ? inv : e * inv;
          const double resid = q[i] - pi;
          const double w = e * inv * inv;
          out[0] += q[i] * eta - (std::max(eta, 0.0) + std::log1p(e));
          for (std::size_t j = 0; j < c; ++j) out[1 + j] += resid * x[j];
          std::size_t pos = 1 + c;
          for (std::size_t a = 0; a < c; ++a) {
            const double wa = w * x[a];
            for (std::size_t b = a; b < c; ++b) out[pos++] += wa * x[b];
          }
        }
      });
  NewtonPass pass{acc[0], std::vector<double>(acc.begin() + 1, acc.begin() + 1 + c),
                  Eigen::MatrixXd(c, c)};
  std::size_t pos = 1 + c;
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a; b < c; ++b) {
      pass.hessian(a, b) = acc[pos];
      pass.hessian(b, a) = acc[pos];
      ++pos;
    }
  }
  return pass;
}

// Coordinates pinned at a bound with the gradient pointing outward are held.
inline std::vector<bool> active_set(std::span<const double> beta, std::span<const double> grad,
                                    double box) {
  std::vector<bool> active(beta.size(), false);
  for (std::size_t j = 0; j < beta.size(); ++j) {
    active[j] = (beta[j] >= box && grad[j] > 0.0) || (beta[j] <= -box && grad[j] < 0.0);
  }
  return active;
}

inline double projected_gradient_norm(std::span<const double> grad, const std::vector<bool>& active) {
  double s = 0.0;
  for (std::size_t j = 0; j < grad.size(); ++j) {
    if (!active[j]) s += grad[j] * grad[j];
  }
  return std::sqrt(s);
}

}  // namespace detail

// argmax over the box of Σ Q_i log π_i + (1-Q_i) log(1-π_i): projected Newton
// (IRLS) warm-started at beta_init, with step halving so the objective never
// decreases. A singular Hessian is regularised with 1e-8 I.
template <class Real>
MStepResult m_step_beta(std::span<const double> q, const BasicHypothesisTable<Real>& table,
                        std::span<const double> beta_init, const ParamBounds& bounds = {},
                        int max_iter = 25, double grad_tol = 1e-8) {
  const std::size_t c = table.cols();
  if (q.size() != table.m()) throw ContractViolation("Q length must equal m");
  if (beta_init.size() != c) throw ContractViolation("beta length must equal d + 1");

  MStepResult out;
  out.beta.resize(c);
  for (std::size_t j = 0; j < c; ++j) out.beta[j] = bounds.clip_beta(beta_init[j]);
  double last_tiny_gradient = std::numeric_limits<double>::infinity();

  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const auto pass = detail::newton_pass(table, q, out.beta);
    out.objective = pass.objective;
    const auto active = detail::active_set(out.beta, pass.gradient, bounds.box);
    out.gradient_norm = detail::projected_gradient_norm(pass.gradient, active);
    const bool small_gradient = out.gradient_norm <= grad_tol;

    std::vector<std::size_t> free;
    for (std::size_t j = 0; j < c; ++j) {
      if (!active[j]) free.push_back(j);
    }
    if (free.empty()) {
      out.converged = true;
      return out;
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd h(nf, nf);
    Eigen::VectorXd g(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      g(a) = pass.gradient[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) h(a, b) = pass.hessian(free[a], free[b]);
    }
    Eigen::VectorXd step;
    {
      Eigen::LLT<Eigen::MatrixXd> llt(h);
      bool ok = llt.info() == Eigen::Success;
      if (ok) {
        const auto diag = llt.matrixLLT().diagonal().array().square();
        ok = diag.minCoeff() > 1e-14 * diag.maxCoeff();
      }
      double ridge = 1e-8;
      while (!ok && ridge < 1e6) {
        out.ridge_used = true;
        llt.compute(h + ridge * Eigen::MatrixXd::Identity(nf, nf));
        ok = llt.info() == Eigen::Success;
        if (!ok) ridge *= 100.0;
      }
      if (!ok) {
        out.converged = small_gradient;
        return out;
      }
      step = llt.solve(g);
    }
    if (small_gradient) {
      // One last Newton step: its error is quadratic in the current one.
      for (Eigen::Index a = 0; a < nf; ++a) {
        out.beta[free[a]] = bounds.clip_beta(out.beta[free[a]] + step(a));
      }
      out.converged = true;
      return out;
    }

    std::vector<double> trial(c);
    double predicted = 0.0;
    for (Eigen::Index a = 0; a < nf; ++a) predicted += 0.5 * g(a) * step(a);
    if (predicted <= 1e-13 * (1.0 + std::abs(pass.objective))) {
      // Gain below rounding of the objective, so the line search cannot
      // judge it: take full Newton steps while the gradient shrinks.
      if (out.gradient_norm >= last_tiny_gradient) break;
      last_tiny_gradient = out.gradient_norm;
      for (Eigen::Index a = 0; a < nf; ++a) {
        out.beta[free[a]] = bounds.clip_beta(out.beta[free[a]] + step(a));
      }
      continue;
    }
    bool accepted = false;
    for (double s = 1.0; s > 1e-10; s *= 0.5) {
      trial = out.beta;
      for (Eigen::Index a = 0; a < nf; ++a) {
        trial[free[a]] = bounds.clip_beta(out.beta[free[a]] + s * step(a));
      }
      const double value = detail::weighted_bernoulli_loglik(table, q, trial);
      if (value > pass.objective) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Newton direction yields no increase: stationary up to rounding.
      out.converged = out.gradient_norm <= std::max(grad_tol, 1e-6 * std::sqrt(double(table.m())));
      return out;
    }
    out.beta = trial;
  }
  const auto pass = detail::newton_pass(table, q, out.beta);
  out.objective = pass.objective;
  const auto active = detail::active_set(out.beta, pass.gradient, bounds.box);
  out.gradient_norm = detail::projected_gradient_norm(pass.gradient, active);
  out.converged = out.gradient_norm <= grad_tol;
  return out;
}

// ============================================================================
// M STEP FOR k
// ============================================================================

// argmax over [k_min, k_max] of A log(1 - γ^k) + B k log γ, where
// A = Σ (1-Q_i) y_i and B = Σ (1-Q_i)(1-y_i). The stationary point is
// γ^k = B / (A + B); the objective is concave in k, so clipping is exact.
// Returns previous_k when A = B = 0.
inline double m_step_k(std::span<const double> q, std::span<const std::uint8_t> y, double gamma,
                       double previous_k, const ParamBounds& bounds = {}) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (q.size() != y.size()) throw ContractViolation("Q and y differ in length");
  std::vector<double> ab = deterministic_vector_sum(
      q.size(), 2, [&](std::size_t begin, std::size_t end, std::span<double> out) {
        for (std::size_t i = begin; i < end; ++i) out[y[i] ? 0 : 1] += 1.0 - q[i];
      });
  const double a = ab[0];
  const double b = ab[1];
  if (a <= 0.0 && b <= 0.0) return previous_k;
  if (a <= 0.0) return bounds.k_min;
  if (b <= 0.0) return bounds.k_max;
  return bounds.clip_k(std::log(b / (a + b)) / std::log(gamma));
}

// ============================================================================
// EM DRIVER
// ============================================================================

inline void apply_winsorization(MixtureFit& fit, double eps1, double eps2) {
  if (!(eps1 >= 0.0 && eps1 < eps2 && eps2 <= 1.0)) {
    throw std::invalid_argument("winsorization bounds must satisfy 0 <= eps1 < eps2 <= 1");
  }
  fit.eps1 = eps1;
  fit.eps2 = eps2;
  fit.pi_hat.resize(fit.pi_tilde.size());
  for (std::size_t i = 0; i < fit.pi_tilde.size(); ++i) {
    fit.pi_hat[i] = std::clamp(fit.pi_tilde[i], eps1, eps2);
  }
}

class EmFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class Real>
MixtureFit fit_em(const BasicHypothesisTable<Real>& table, double gamma, const InitEstimate& init,
                  const EmOptions& opts = {}, const ParamBounds& bounds = {}) {
  bounds.validate();
  opts.validate(bounds);
  if (table.m() == 0) throw std::invalid_argument("cannot fit an empty table");
  if (init.beta0.size() != table.cols()) throw ContractViolation("initializer has wrong length");
  const CensoredData censored = censor(table.pvalues(), gamma);

  MixtureFit fit;
  fit.gamma = gamma;
  fit.params.beta.resize(table.cols());
  for (std::size_t j = 0; j < table.cols(); ++j) fit.params.beta[j] = bounds.clip_beta(init.beta0[j]);
  fit.params.k = opts.fixed_k ? *opts.fixed_k : bounds.clip_k(init.k0);

  auto checked_loglik = [&](const MixtureParams& params, int iteration) {
    const double value = quasi_loglik(table, censored, params);
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite quasi log-likelihood at EM iteration " << iteration;
      throw EmFailure(msg.str());
    }
    return value;
  };

  bool ridge_warned = false;
  auto em_map = [&](const MixtureParams& from) {
    ++fit.em_maps;
    const auto q = e_step(table, censored, from);
    const auto m_beta = m_step_beta(std::span<const double>(q), table,
                                    std::span<const double>(from.beta), bounds,
                                    opts.irls_max_iter, opts.irls_tol);
    if (m_beta.ridge_used && !ridge_warned) {
      fit.warnings.push_back("singular Hessian in the beta update; ridge regularisation applied");
      ridge_warned = true;
    }
    MixtureParams to{m_beta.beta, from.k};
    if (!opts.fixed_k) to.k = m_step_k(q, censored.y, gamma, from.k, bounds);
    return to;
  };

  double previous = checked_loglik(fit.params, 0);
  fit.loglik_trace.push_back(previous);
  for (int t = 1; t <= opts.max_iterations; ++t) {
    const MixtureParams p1 = em_map(fit.params);
    MixtureParams next;
    double current = 0.0;
    if (!opts.accelerate) {
      next = p1;
      current = checked_loglik(next, t);
    } else {
      // One SQUAREM cycle: two EM maps, a projected extrapolation along the
      // observed secant and a stabilising map. Kept only if it beats the
      // plain two-step EM point.
      const MixtureParams p2 = em_map(p1);
      const double l2 = checked_loglik(p2, t);
      next = p2;
      current = l2;
      const std::size_t c = p2.beta.size();
      std::vector<double> r(c + 1), v(c + 1);
      for (std::size_t j = 0; j < c; ++j) {
        r[j] = p1.beta[j] - fit.params.beta[j];
        v[j] = p2.beta[j] - 2.0 * p1.beta[j] + fit.params.beta[j];
      }
      r[c] = p1.k - fit.params.k;
      v[c] = p2.k - 2.0 * p1.k + fit.params.k;
      double rr = 0.0, vv = 0.0;
      for (std::size_t j = 0; j <= c; ++j) {
        rr += r[j] * r[j];
        vv += v[j] * v[j];
      }
      if (vv > 0.0 && rr > 0.0) {
        const double a = std::min(-1.0, -std::sqrt(rr / vv));
        if (a < -1.0) {
          MixtureParams jump{std::vector<double>(c), fit.params.k};
          for (std::size_t j = 0; j < c; ++j) {
            jump.beta[j] = bounds.clip_beta(fit.params.beta[j] - 2.0 * a * r[j] + a * a * v[j]);
          }
          if (!opts.fixed_k) jump.k = bounds.clip_k(fit.params.k - 2.0 * a * r[c] + a * a * v[c]);
          const MixtureParams p3 = em_map(jump);
          const double l3 = quasi_loglik(table, censored, p3);
          if (std::isfinite(l3) && l3 >= l2) {
            next = p3;
            current = l3;
          }
        }
      }
    }
    fit.params = std::move(next);
    fit.loglik_trace.push_back(current);
    fit.iterations = t;
    const double rel = std::abs(current - previous) / std::max(std::abs(previous), 1e-300);
    previous = current;
    if (rel < opts.tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) fit.warnings.push_back("EM reached the iteration limit before converging");

  fit.eta.resize(table.m());
  fit.pi_tilde.resize(table.m());
  const std::span<const double> beta(fit.params.beta);
  parallel_for_chunks(table.m(), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      fit.eta[i] = linear_predictor(table.row(i), beta);
      fit.pi_tilde[i] = logistic(fit.eta[i]);
    }
  });
  apply_winsorization(fit, fit.eps1, fit.eps2);
  return fit;
}

}  // namespace camt
