#pragma once

// Numerical building blocks shared by every module: the contract-violation
// error type, a chunked parallel loop whose reductions do not depend on the
// thread count, compensated summation, stable logistic helpers, normal tail
// functions and a bisection root finder.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

namespace camt {

// Raised when a caller breaks a documented precondition (dimension mismatch,
// ill-formed table). Argument-range problems use std::invalid_argument.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ============================================================================
// THREADING
// ============================================================================

namespace detail {
inline std::size_t& thread_count_storage() {
  static std::size_t n = [] {
    if (const char* env = std::getenv("CAMT_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::size_t{1};
  }();
  return n;
}
}  // namespace detail

inline std::size_t thread_count() { return detail::thread_count_storage(); }

// 0 means "all hardware threads".
inline void set_thread_count(std::size_t n) {
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  detail::thread_count_storage() = n;
}

// Rows per reduction chunk. Partial sums are formed per chunk and combined in
// chunk order, so results are bit-identical for any thread count.
inline constexpr std::size_t kReductionChunk = 8192;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kReductionChunk) {
  return (n + chunk - 1) / chunk;
}

// Calls f(chunk_index, begin, end) for every chunk of [0, n), possibly on
// several threads. f must only write to state owned by its chunk.
template <class F>
void parallel_for_chunks(std::size_t n, F&& f, std::size_t chunk = kReductionChunk) {
  const std::size_t chunks = chunk_count(n, chunk);
  const std::size_t workers = std::min(thread_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) f(c, c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t c = next++; c < chunks; c = next++) {
      f(c, c * chunk, std::min(n, (c + 1) * chunk));
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
  body();
}

// ============================================================================
// SUMMATION
// ============================================================================

// Neumaier's variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Σ term(i) for i in [0, n). Each chunk is summed with compensation and the
// chunk partials are combined in order.
template <class Term>
double deterministic_sum(std::size_t n, Term&& term) {
  std::vector<double> partial(chunk_count(n));
  parallel_for_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
    CompensatedSum s;
    for (std::size_t i = begin; i < end; ++i) s.add(term(i));
    partial[c] = s.value();
  });
  CompensatedSum total;
  for (double p : partial) total.add(p);
  return total.value();
}

// Vector-valued reduction. accumulate(begin, end, acc) adds the contribution
// of rows [begin, end) into acc (length width, zero-initialised).
template <class Accumulate>
std::vector<double> deterministic_vector_sum(std::size_t n, std::size_t width,
                                             Accumulate&& accumulate) {
  const std::size_t chunks = chunk_count(n);
  std::vector<double> partial(chunks * width, 0.0);
  parallel_for_chunks(n, [&](std::size_t c, std::size_t begin, std::size_t end) {
    accumulate(begin, end, std::span<double>(partial.data() + c * width, width));
  });
  std::vector<double> total(width, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t j = 0; j < width; ++j) total[j] += partial[c * width + j];
  }
  return total;
}

// ============================================================================
// LOGISTIC HELPERS
// ============================================================================

inline double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log logistic(eta)
inline double log_logistic(double eta) { return -softplus(-eta); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// ============================================================================
// NORMAL DISTRIBUTION
// ============================================================================

inline constexpr double kSqrt2 = std::numbers::sqrt2;

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// 1 - Φ(z), accurate in the upper tail.
inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / kSqrt2); }

// z such that 1 - Φ(z) = p.
inline double normal_upper_quantile(double p) {
  if (p <= 0.0) return std::numeric_limits<double>::infinity();
  if (p >= 1.0) return -std::numeric_limits<double>::infinity();
  return kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

// ============================================================================
// ROOT FINDING
// ============================================================================

// Smallest-interval bisection for a non-decreasing f on [lo, hi]: returns x
// with f(x) ≈ target, stopping when hi - lo <= tol.
template <class F>
double bisect_increasing(F&& f, double target, double lo, double hi, double tol) {
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace camt
