#pragma once

// Synthetic studies: one N(0,1) covariate, logistic null probability
// π_i = logistic(η0 + k_d x_i), H_i ~ Bern(1 - π_i), z-scores with a normal
// or shifted-gamma alternative and optional block / AR(1) dependence, and
// one-sided p-values p_i = 1 - Φ(z_i).
//
// Every random quantity is addressed by (seed, replicate, stream, index) in a
// counter-based generator, so a replicate is reproducible on its own.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "camt/baselines.hpp"
#include "camt/model.hpp"
#include "camt/numeric.hpp"
#include "camt/random.hpp"

namespace camt {

enum class AlternativeKind { kNormal, kShiftedGamma };

enum class CorrelationKind { kIndependent, kBlock, kBlockSigned, kAr1 };

struct CorrelationSpec {
  CorrelationKind kind = CorrelationKind::kIndependent;
  std::size_t block_size = 20;
  std::size_t sub_block = 10;
  double rho = 0.5;
  double phi = 0.75;

  static CorrelationSpec independent() { return {}; }
  static CorrelationSpec block(std::size_t size = 20, double rho = 0.5) {
    return {CorrelationKind::kBlock, size, size / 2, rho, 0.0};
  }
  static CorrelationSpec block_signed(std::size_t size = 20, std::size_t sub = 10, double rho = 0.5) {
    return {CorrelationKind::kBlockSigned, size, sub, rho, 0.0};
  }
  static CorrelationSpec ar1(double phi) { return {CorrelationKind::kAr1, 20, 10, 0.0, phi}; }

  // Target correlation between z_i and z_j (i != j) under the complete null.
  double target(std::size_t i, std::size_t j) const {
    if (i == j) return 1.0;
    switch (kind) {
      case CorrelationKind::kIndependent:
        return 0.0;
      case CorrelationKind::kBlock:
        return i / block_size == j / block_size ? rho : 0.0;
      case CorrelationKind::kBlockSigned: {
        if (i / block_size != j / block_size) return 0.0;
        const bool same = (i % block_size < sub_block) == (j % block_size < sub_block);
        return same ? rho : -rho;
      }
      case CorrelationKind::kAr1:
        return std::pow(phi, static_cast<double>(i > j ? i - j : j - i));
    }
    return 0.0;
  }
};

struct SimulationConfig {
  std::size_t m = 10000;
  double eta0 = 2.5;
  double kd = 1.0;
  double ks = 2.4;
  AlternativeKind alternative = AlternativeKind::kNormal;
  CorrelationSpec correlation;
  std::uint64_t seed = 1;
  bool complete_null = false;  // every H_i = 0

  void validate() const {
    if (m < 1) throw std::invalid_argument("m must be at least 1");
    if (!(ks >= 0.0)) throw std::invalid_argument("signal strength must be non-negative");
    const auto& c = correlation;
    if (c.kind == CorrelationKind::kBlock || c.kind == CorrelationKind::kBlockSigned) {
      if (c.block_size == 0 || m % c.block_size != 0) {
        throw std::invalid_argument("block size must divide m");
      }
      if (!(c.rho >= 0.0 && c.rho <= 1.0)) throw std::invalid_argument("rho must lie in [0,1]");
      if (c.kind == CorrelationKind::kBlockSigned && !(c.sub_block > 0 && c.sub_block < c.block_size)) {
        throw std::invalid_argument("sub-block size must lie strictly inside the block");
      }
    }
    if (c.kind == CorrelationKind::kAr1 && !(std::abs(c.phi) < 1.0)) {
      throw std::invalid_argument("AR(1) coefficient must satisfy |phi| < 1");
    }
  }

  // The alternative p-value density the oracle should use.
  AlternativeSpec oracle_alternative() const {
    return alternative == AlternativeKind::kNormal ? AlternativeSpec::normal_shift(ks)
                                                   : AlternativeSpec::shifted_gamma(ks);
  }
};

// Named settings: S0 (independent normal), S1 (shifted gamma), S2.1 block,
// S2.2 signed block, S2.3 AR(0.75), S2.4 AR(-0.75).
inline void apply_setup(SimulationConfig& config, const std::string& setup) {
  config.alternative = AlternativeKind::kNormal;
  config.correlation = CorrelationSpec::independent();
  if (setup == "S0") return;
  if (setup == "S1") {
    config.alternative = AlternativeKind::kShiftedGamma;
  } else if (setup == "S2.1") {
    config.correlation = CorrelationSpec::block(20, 0.5);
  } else if (setup == "S2.2") {
    config.correlation = CorrelationSpec::block_signed(20, 10, 0.5);
  } else if (setup == "S2.3") {
    config.correlation = CorrelationSpec::ar1(0.75);
  } else if (setup == "S2.4") {
    config.correlation = CorrelationSpec::ar1(-0.75);
  } else {
    throw std::invalid_argument("unknown setup '" + setup + "' (expected S0, S1, S2.1-S2.4)");
  }
}

// The six signal strengths equally spaced on [2, 2.8], labelled 1..6.
inline double signal_strength_level(int label) {
  if (label < 1 || label > 6) throw std::invalid_argument("signal strength label must be 1..6");
  return 2.0 + 0.16 * (label - 1);
}

struct SimulatedStudy {
  HypothesisTable table;
  std::vector<std::uint8_t> truth;  // H_i
  std::vector<double> z;
  std::vector<double> pi_true;
};

// Unit-variance noise e_1..e_m for one replicate.
inline std::vector<double> simulate_noise(const SimulationConfig& config, std::uint64_t replicate) {
  const CounterRng rng(config.seed);
  const auto& c = config.correlation;
  std::vector<double> e(config.m);
  for (std::size_t i = 0; i < config.m; ++i) e[i] = rng.normal(replicate, Stream::kNoise, i);
  switch (c.kind) {
    case CorrelationKind::kIndependent:
      break;
    case CorrelationKind::kBlock:
    case CorrelationKind::kBlockSigned: {
      const double shared = std::sqrt(c.rho);
      const double own = std::sqrt(1.0 - c.rho);
      for (std::size_t i = 0; i < config.m; ++i) {
        const std::size_t b = i / c.block_size;
        double sign = 1.0;
        if (c.kind == CorrelationKind::kBlockSigned && i % c.block_size >= c.sub_block) sign = -1.0;
        e[i] = sign * shared * rng.normal(replicate, Stream::kBlockFactor, b) + own * e[i];
      }
      break;
    }
    case CorrelationKind::kAr1: {
      const double innov = std::sqrt(1.0 - c.phi * c.phi);
      for (std::size_t i = 1; i < config.m; ++i) e[i] = c.phi * e[i - 1] + innov * e[i];
      break;
    }
  }
  return e;
}

inline SimulatedStudy simulate(const SimulationConfig& config, std::uint64_t replicate = 0) {
  config.validate();
  const CounterRng rng(config.seed);
  const std::size_t m = config.m;
  SimulatedStudy study;
  study.truth.resize(m);
  study.z = simulate_noise(config, replicate);
  study.pi_true.resize(m);
  std::vector<double> x(m);
  std::vector<double> p(m);
  std::vector<std::string> ids(m);
  const double location = shifted_gamma_location(config.ks);
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = rng.normal(replicate, Stream::kCovariate, i);
    study.pi_true[i] = logistic(config.eta0 + config.kd * x[i]);
    const bool alt =
        !config.complete_null && rng.uniform(replicate, Stream::kTruth, i) < 1.0 - study.pi_true[i];
    study.truth[i] = alt ? 1 : 0;
    if (alt) {
      if (config.alternative == AlternativeKind::kNormal) {
        study.z[i] += config.ks;
      } else {
        study.z[i] = location + kGammaScale * rng.gamma_shape2(replicate, Stream::kGamma, i);
      }
    }
    p[i] = normal_upper_tail(study.z[i]);
    ids[i] = "h" + std::to_string(i + 1);
  }
  study.table = HypothesisTable::with_intercept(std::move(ids), std::move(p), x, 1);
  return study;
}

// ============================================================================
// CORRELATION CHECK
// ============================================================================

struct CorrelationCheck {
  std::size_t m = 0;
  std::size_t n_rep = 0;
  std::vector<double> corr;          // m x m sample correlation of the null z-scores
  double max_abs_deviation = 0.0;    // over all off-diagonal pairs
  double max_class_deviation = 0.0;  // over class means (see classes)
  // Mean estimate and target per class: pairs sharing a target value.
  std::vector<double> class_target;
  std::vector<double> class_mean;
  std::vector<double> marginal_variance;
};

// Monte-Carlo estimate of corr(z_i, z_j) under the complete null, compared
// with the target structure. Pairs are grouped into classes with a common
// target (within-block, across sub-blocks, each AR lag, unrelated).
inline CorrelationCheck empirical_correlation_check(SimulationConfig config, std::size_t n_rep) {
  if (config.m > 200) throw std::invalid_argument("correlation check is limited to m <= 200");
  if (n_rep < 2) throw std::invalid_argument("correlation check needs at least two replicates");
  config.complete_null = true;
  config.validate();
  const std::size_t m = config.m;
  std::vector<double> mean(m, 0.0);
  std::vector<double> cross(m * m, 0.0);
  for (std::size_t r = 0; r < n_rep; ++r) {
    const auto e = simulate_noise(config, r);
    for (std::size_t i = 0; i < m; ++i) {
      mean[i] += e[i];
      for (std::size_t j = i; j < m; ++j) cross[i * m + j] += e[i] * e[j];
    }
  }
  const auto n = static_cast<double>(n_rep);
  CorrelationCheck out;
  out.m = m;
  out.n_rep = n_rep;
  out.corr.assign(m * m, 0.0);
  out.marginal_variance.resize(m);
  std::vector<double> cov(m * m);
  for (std::size_t i = 0; i < m; ++i) mean[i] /= n;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      cov[i * m + j] = (cross[i * m + j] - n * mean[i] * mean[j]) / (n - 1.0);
    }
    out.marginal_variance[i] = cov[i * m + i];
  }
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < m; ++i) {
    out.corr[i * m + i] = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      const double r = cov[i * m + j] / std::sqrt(cov[i * m + i] * cov[j * m + j]);
      out.corr[i * m + j] = out.corr[j * m + i] = r;
      const double target = config.correlation.target(i, j);
      out.max_abs_deviation = std::max(out.max_abs_deviation, std::abs(r - target));
      std::size_t cls = 0;
      while (cls < out.class_target.size() && out.class_target[cls] != target) ++cls;
      if (cls == out.class_target.size()) {
        out.class_target.push_back(target);
        sums.push_back(0.0);
        counts.push_back(0);
      }
      sums[cls] += r;
      ++counts[cls];
    }
  }
  out.class_mean.resize(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) {
    out.class_mean[c] = sums[c] / static_cast<double>(counts[c]);
    out.max_class_deviation =
        std::max(out.max_class_deviation, std::abs(out.class_mean[c] - out.class_target[c]));
  }
  return out;
}

}  // namespace camt
