#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "camt/simulation.hpp"

namespace {

TEST(Simulate, SignalFraction) {
  camt::SimulationConfig config;
  config.m = 100000;
  config.kd = 0.0;
  config.eta0 = 2.5;
  config.seed = 4;
  const auto study = camt::simulate(config);
  double alt = 0;
  for (auto h : study.truth) alt += h;
  EXPECT_NEAR(alt / config.m, 1.0 / (1.0 + std::exp(2.5)), 0.005);
  EXPECT_NEAR(alt / config.m, 0.0759, 0.005);
}

TEST(Simulate, ShiftedGammaMoments) {
  const double ks = 2.4;
  const camt::CounterRng rng(9);
  const std::size_t n = 1000000;
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = camt::shifted_gamma_location(ks) + camt::kGammaScale * rng.gamma_shape2(0, camt::Stream::kGamma, i);
    s += z;
    s2 += z * z;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, ks, 0.01);
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(Simulate, ReproducibleAndConsistent) {
  camt::SimulationConfig config;
  config.m = 2000;
  config.seed = 21;
  for (const char* setup : {"S0", "S1", "S2.1", "S2.2", "S2.3", "S2.4"}) {
    camt::apply_setup(config, setup);
    const auto a = camt::simulate(config, 3);
    const auto b = camt::simulate(config, 3);
    EXPECT_EQ(a.table.pvalues(), b.table.pvalues()) << setup;
    EXPECT_EQ(a.truth, b.truth);
    EXPECT_EQ(a.table.covariates(), b.table.covariates());
    for (std::size_t i = 0; i < config.m; ++i) {
      EXPECT_NEAR(a.table.pvalue(i), 0.5 * std::erfc(a.z[i] / std::sqrt(2.0)), 1e-12);
    }
    const auto c = camt::simulate(config, 4);
    EXPECT_NE(a.table.pvalues(), c.table.pvalues());
  }
}

TEST(Simulate, CompleteNullHasNoSignals) {
  camt::SimulationConfig config;
  config.m = 500;
  config.complete_null = true;
  const auto s = camt::simulate(config);
  for (auto h : s.truth) EXPECT_EQ(h, 0);
}

TEST(Simulate, ValidatesConfig) {
  camt::SimulationConfig config;
  config.m = 1010;
  config.correlation = camt::CorrelationSpec::block(20, 0.5);
  EXPECT_THROW(camt::simulate(config), std::invalid_argument);
  config.correlation = camt::CorrelationSpec::ar1(1.0);
  EXPECT_THROW(camt::simulate(config), std::invalid_argument);
  EXPECT_THROW(camt::apply_setup(config, "S9"), std::invalid_argument);
  EXPECT_THROW(camt::signal_strength_level(7), std::invalid_argument);
  EXPECT_NEAR(camt::signal_strength_level(6), 2.8, 1e-12);
}

TEST(Correlation, BlockWithinTolerance) {
  camt::SimulationConfig config;
  config.m = 40;
  config.correlation = camt::CorrelationSpec::block(20, 0.5);
  const auto c = camt::empirical_correlation_check(config, 20000);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = i + 1; j < 40; ++j) {
      if (i / 20 == j / 20) EXPECT_NEAR(c.corr[i * 40 + j], 0.5, 0.02);
    }
  }
  EXPECT_LT(c.max_class_deviation, 0.02);
}

TEST(Correlation, SignedBlockAndAr1) {
  camt::SimulationConfig config;
  config.m = 40;
  config.correlation = camt::CorrelationSpec::block_signed(20, 10, 0.5);
  auto c = camt::empirical_correlation_check(config, 20000);
  EXPECT_NEAR(c.corr[0 * 40 + 1], 0.5, 0.03);
  EXPECT_NEAR(c.corr[0 * 40 + 15], -0.5, 0.03);
  EXPECT_LT(c.max_class_deviation, 0.02);

  config.correlation = camt::CorrelationSpec::ar1(0.75);
  c = camt::empirical_correlation_check(config, 20000);
  double lag2 = 0;
  for (std::size_t i = 0; i + 2 < 40; ++i) lag2 += c.corr[i * 40 + i + 2] / 38.0;
  EXPECT_NEAR(lag2, 0.5625, 0.02);

  config.correlation = camt::CorrelationSpec::independent();
  c = camt::empirical_correlation_check(config, 20000);
  EXPECT_LT(c.max_class_deviation, 0.02);
}

TEST(Correlation, UnitMarginalVariance) {
  const double se = std::sqrt(2.0 / 20000.0);
  for (const char* setup : {"S0", "S2.1", "S2.2", "S2.3", "S2.4"}) {
    camt::SimulationConfig config;
    config.m = 40;
    camt::apply_setup(config, setup);
    const auto c = camt::empirical_correlation_check(config, 20000);
    double mean = 0;
    for (double v : c.marginal_variance) mean += v / 40.0;
    EXPECT_NEAR(mean, 1.0, 3 * se) << setup;
  }
}

}  // namespace
