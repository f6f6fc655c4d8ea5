#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dsgd/random.hpp"

using namespace dsgd;

TEST(RandomSource, MatchesStdEngine) {
  RandomSource a(7);
  std::mt19937_64 ref(7);
  for (int k = 0; k < 1000; ++k) EXPECT_EQ(a.next(), ref());
}

TEST(RandomSource, SameSeedSameStream) {
  RandomSource a(123), b(123);
  for (int k = 0; k < 100; ++k) {
    EXPECT_EQ(a.uniform_index(17), b.uniform_index(17));
    EXPECT_EQ(a.uniform01(), b.uniform01());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(RandomSource, UniformIndexInRangeAndRoughlyFlat) {
  RandomSource rng(3);
  const std::uint64_t bound = 7;
  const int draws = 700000;
  std::vector<int> counts(bound, 0);
  for (int k = 0; k < draws; ++k) {
    const auto v = rng.uniform_index(bound);
    ASSERT_LT(v, bound);
    ++counts[v];
  }
  // chi-square with 6 dof; 0.999 quantile is 22.46
  double chi = 0.0;
  const double e = static_cast<double>(draws) / bound;
  for (int c : counts) chi += (c - e) * (c - e) / e;
  EXPECT_LT(chi, 22.46);
}

TEST(RandomSource, UniformIndexOneIsZero) {
  RandomSource rng(1);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(rng.uniform_index(1), 0u);
}

TEST(RandomSource, Uniform01HalfOpen) {
  RandomSource rng(9);
  double sum = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(RandomSource, NormalMoments) {
  RandomSource rng(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(DeriveSeed, PureAndSpread) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
  EXPECT_NE(derive_seed(1, 0, 0), 1u);
}
