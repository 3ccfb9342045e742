#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "camt/baselines.hpp"
#include "camt/random.hpp"

namespace {

using camt::AlternativeSpec;
using R = camt::Rejections;

TEST(Bonferroni, HandCases) {
  EXPECT_EQ(camt::bonferroni(std::vector<double>{0.01, 0.04}, 0.05), (R{1, 0}));
  EXPECT_EQ(camt::bonferroni(std::vector<double>{0.0, 1e-9}, 0.0), (R{1, 0}));
  EXPECT_EQ(camt::bonferroni(std::vector<double>{0.05}, 0.05), (R{1}));
  EXPECT_EQ(camt::bonferroni(std::vector<double>{0.0500001}, 0.05), (R{0}));
}

TEST(Holm, HandCases) {
  EXPECT_EQ(camt::holm(std::vector<double>{0.01, 0.04}, 0.05), (R{1, 1}));
  EXPECT_EQ(camt::holm(std::vector<double>{0.04, 0.01}, 0.05), (R{1, 1}));
  EXPECT_EQ(camt::holm(std::vector<double>(5, 1.0), 0.05), R(5, 0));
  // Stops at the first failure even if later ranks would pass.
  EXPECT_EQ(camt::holm(std::vector<double>{0.001, 0.03, 0.03}, 0.05), (R{1, 0, 0}));
}

TEST(Holm, DominatesBonferroni) {
  const camt::CounterRng rng(3);
  for (std::uint64_t inst = 0; inst < 1000; ++inst) {
    const std::size_t m = 1 + rng.below(60, inst, camt::Stream::kBootstrap, 0);
    std::vector<double> p(m);
    for (std::size_t i = 0; i < m; ++i) {
      p[i] = std::pow(rng.uniform(inst, camt::Stream::kNoise, i), 4.0);
    }
    const double alpha = 0.2 * rng.uniform(inst, camt::Stream::kTruth, 0);
    const auto b = camt::bonferroni(p, alpha);
    const auto h = camt::holm(p, alpha);
    for (std::size_t i = 0; i < m; ++i) ASSERT_LE(b[i], h[i]);
  }
}

TEST(WeightedBonferroni, Cutoffs) {
  const std::vector<double> pi{0.5, 1.0};
  EXPECT_EQ(camt::weighted_bonferroni(std::vector<double>{0.0499, 0.0249}, pi, 0.05), (R{1, 1}));
  EXPECT_EQ(camt::weighted_bonferroni(std::vector<double>{0.05, 0.025}, pi, 0.05), (R{0, 0}));
  // Uniform weights: Bonferroni with a strict inequality.
  const std::vector<double> ones(2, 1.0);
  EXPECT_EQ(camt::weighted_bonferroni(std::vector<double>{0.025, 0.02}, ones, 0.05), (R{0, 1}));
  // Tiny weight pushes the cutoff above 1.
  EXPECT_EQ(camt::weighted_bonferroni(std::vector<double>{0.999}, std::vector<double>{0.01}, 0.05), (R{1}));
  EXPECT_THROW(camt::weighted_bonferroni(std::vector<double>{0.1}, std::vector<double>{0.0}, 0.05),
               std::invalid_argument);
}

TEST(F1, BetaRoundTrip) {
  const auto spec = AlternativeSpec::beta(0.5);
  EXPECT_NEAR(camt::f1_density(spec, 0.25), 1.0, 1e-15);
  EXPECT_NEAR(camt::f1_inverse(spec, 1.0), 0.25, 1e-15);
  const camt::CounterRng rng(1);
  for (std::size_t i = 0; i < 100; ++i) {
    const double p = 1e-6 + (1 - 2e-6) * rng.uniform(0, camt::Stream::kNoise, i);
    EXPECT_NEAR(camt::f1_inverse(spec, camt::f1_density(spec, p)), p, 1e-9 * std::max(1.0, p));
  }
  EXPECT_EQ(camt::f1_inverse(spec, 0.4), 1.0);
}

TEST(F1, NormalShiftHandValue) {
  const auto spec = AlternativeSpec::normal_shift(2.0);
  const double p = camt::normal_upper_tail(2.0);
  EXPECT_NEAR(p, 0.02275, 5e-6);
  // φ(z - k_s)/φ(z) at z = k_s = 2 is φ(0)/φ(2) = 0.398942/0.053991.
  const auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); };
  EXPECT_NEAR(camt::f1_density(spec, p), phi(0.0) / phi(2.0), 1e-9);
  EXPECT_NEAR(camt::f1_density(spec, p), 7.389056, 5e-6);
  EXPECT_THROW(camt::f1_density(AlternativeSpec::normal_shift(0.0), 0.5), camt::UnsupportedFamily);
}

TEST(F1, InverseMonotoneAndRoundTrip) {
  for (const auto& spec : {AlternativeSpec::beta(0.2), AlternativeSpec::normal_shift(2.4),
                           AlternativeSpec::shifted_gamma(2.4)}) {
    double prev = 2.0;
    for (double lv = -3.0; lv <= 8.0; lv += 0.25) {
      const double t = camt::f1_inverse(spec, std::exp(lv));
      EXPECT_LE(t, prev);
      prev = t;
      if (t < 1.0 && t > 1e-300) {
        EXPECT_NEAR(std::log(camt::f1_density(spec, t)), lv, 1e-6) << int(spec.family) << " " << lv;
      }
    }
  }
}

// The shifted-gamma density ratio against a direct evaluation of the
// gamma(2, 1/√2) density at z - location over φ(z).
TEST(F1, ShiftedGammaMatchesDirectDensity) {
  const double ks = 2.4, loc = ks - std::sqrt(2.0), s = 1.0 / std::sqrt(2.0);
  const auto spec = AlternativeSpec::shifted_gamma(ks);
  for (double z : {1.0, 2.0, 3.5, 5.0}) {
    const double t = z - loc;
    const double g = t * std::exp(-t / s) / (s * s);
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
    EXPECT_NEAR(camt::f1_density(spec, camt::normal_upper_tail(z)) / (g / phi), 1.0, 1e-9);
  }
  EXPECT_EQ(camt::f1_density(spec, camt::normal_upper_tail(loc - 0.1)), 0.0);
}

TEST(Oracle, HandExample) {
  const auto d = camt::oracle_reject(std::vector<double>{0.099}, std::vector<double>{0.5},
                                     AlternativeSpec::beta(0.5), 0.05);
  EXPECT_NEAR(d.tau, 1.581139, 5e-7);
  EXPECT_NEAR(d.thresholds[0], 0.1, 1e-10);
  EXPECT_NEAR(d.budget, 0.05, 1e-10);
  EXPECT_EQ(d.rejected[0], 1);
}

TEST(Oracle, CapsAndSymmetry) {
  const auto capped = camt::oracle_reject(std::vector<double>{0.5, 0.9}, std::vector<double>{0.3, 0.3},
                                          AlternativeSpec::beta(0.5), 0.95);
  EXPECT_EQ(capped.thresholds[0], 1.0);
  EXPECT_EQ(capped.thresholds[1], 1.0);
  const camt::CounterRng rng(6);
  std::vector<double> p(50), pi(50, 0.9);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(0, camt::Stream::kNoise, i);
  const auto d = camt::oracle_reject(p, pi, AlternativeSpec::normal_shift(2.0), 0.05);
  for (double t : d.thresholds) EXPECT_EQ(t, d.thresholds[0]);
}

TEST(Oracle, BudgetTight) {
  const camt::CounterRng rng(11);
  const std::size_t m = 3000;
  std::vector<double> p(m), pi(m);
  for (std::size_t i = 0; i < m; ++i) {
    p[i] = rng.uniform(0, camt::Stream::kNoise, i);
    pi[i] = camt::logistic(2.5 + rng.normal(0, camt::Stream::kCovariate, i));
  }
  for (const auto& spec : {AlternativeSpec::beta(0.3), AlternativeSpec::normal_shift(2.4),
                           AlternativeSpec::shifted_gamma(2.4)}) {
    const auto d = camt::oracle_reject(p, pi, spec, 0.05);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += pi[i] * d.thresholds[i];
    EXPECT_LE(s, 0.05 + 1e-8);
    EXPECT_NEAR(s, 0.05, 1e-8);
  }
}

}  // namespace
