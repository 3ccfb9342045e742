#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "camt/numeric.hpp"

namespace {

TEST(CompensatedSum, RecoversCancellation) {
  camt::CompensatedSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  EXPECT_EQ(s.value(), 1.0);
}

TEST(DeterministicSum, IndependentOfThreadCount) {
  const std::size_t n = 100003;
  auto term = [](std::size_t i) { return std::sin(0.37 * static_cast<double>(i)) * 1e3 + 1e-7; };
  const std::size_t saved = camt::thread_count();
  camt::set_thread_count(1);
  const double one = camt::deterministic_sum(n, term);
  camt::set_thread_count(4);
  const double four = camt::deterministic_sum(n, term);
  camt::set_thread_count(saved);
  EXPECT_EQ(one, four);
}

TEST(DeterministicVectorSum, MatchesSerialLoop) {
  const std::size_t n = 20000;
  const auto v = camt::deterministic_vector_sum(n, 2, [](std::size_t b, std::size_t e, std::span<double> out) {
    for (std::size_t i = b; i < e; ++i) {
      out[0] += 1.0;
      out[1] += static_cast<double>(i);
    }
  });
  EXPECT_EQ(v[0], 20000.0);
  EXPECT_EQ(v[1], 19999.0 * 20000.0 / 2.0);
}

TEST(Logistic, StableAtExtremes) {
  EXPECT_EQ(camt::logistic(0.0), 0.5);
  EXPECT_EQ(camt::logistic(800.0), 1.0);
  EXPECT_EQ(camt::logistic(-800.0), 0.0);
  EXPECT_NEAR(camt::softplus(800.0), 800.0, 1e-12);
  EXPECT_NEAR(camt::softplus(-40.0), std::exp(-40.0), 1e-30);
  EXPECT_NEAR(camt::logit(camt::logistic(1.234)), 1.234, 1e-12);
}

TEST(Normal, QuantileInvertsTail) {
  for (double p : {1e-12, 1e-6, 0.02275, 0.3, 0.5, 0.9}) {
    EXPECT_NEAR(camt::normal_upper_tail(camt::normal_upper_quantile(p)) / p, 1.0, 1e-12);
  }
  EXPECT_NEAR(camt::normal_upper_tail(2.0), 0.022750131948179195, 1e-15);
}

TEST(Bisection, FindsRoot) {
  const double x = camt::bisect_increasing([](double t) { return t * t * t; }, 2.0, 0.0, 2.0, 1e-14);
  EXPECT_NEAR(x, std::cbrt(2.0), 1e-12);
}

}  // namespace
