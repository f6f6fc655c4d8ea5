#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "dsgd/analysis.hpp"
#include "dsgd/error.hpp"

using namespace dsgd;

namespace {

MetricsTrace synthetic_trace(const std::vector<double>& passes, const std::vector<double>& values) {
  MetricsTrace t;
  for (std::size_t k = 0; k < passes.size(); ++k) {
    MetricRecord r;
    r.iter = k + 1;
    r.epoch = 1;
    r.effective_passes = passes[k];
    r.f_gap = values[k];
    r.dist_sq = values[k];
    r.grad_norm_sq = values[k];
    t.records.push_back(r);
  }
  return t;
}

}  // namespace

TEST(Tv, IdentityThreeCards) {
  EXPECT_NEAR(tv_exact({ShuffleAlgorithm::Identity, 0}, 3).epsilon, 5.0 / 6, 1e-15);
  RandomSource rng(1);
  EXPECT_NEAR(tv_empirical({ShuffleAlgorithm::Identity, 0}, 3, 1000, rng).epsilon, 5.0 / 6, 1e-15);
}

TEST(Tv, FisherYatesExactlyUniform) {
  for (std::size_t n = 1; n <= 5; ++n) {
    EXPECT_NEAR(tv_exact({ShuffleAlgorithm::FisherYates, 0}, n).epsilon, 0.0, 1e-12);
  }
}

TEST(Tv, HandComputedSmallDecks) {
  EXPECT_NEAR(tv_exact({ShuffleAlgorithm::Riffle, 1}, 3).epsilon, 1.0 / 3, 1e-15);
  EXPECT_NEAR(tv_exact({ShuffleAlgorithm::TopToRandom, 1}, 3).epsilon, 0.5, 1e-15);
}

TEST(Tv, EmpiricalFisherYatesSmall) {
  RandomSource rng(3);
  const auto r = tv_empirical({ShuffleAlgorithm::FisherYates, 0}, 3, 1000000, rng);
  EXPECT_LE(r.epsilon, 0.01);
  ASSERT_TRUE(r.bias_scale.has_value());
}

TEST(Tv, EmpiricalRiffleMixes) {
  RandomSource rng(4);
  EXPECT_LE(tv_empirical({ShuffleAlgorithm::Riffle, 20}, 4, 1000000, rng).epsilon, 0.01);
}

TEST(Tv, ExactAgreesWithSampling) {
  RandomSource rng(6);
  for (auto alg : {ShuffleAlgorithm::Riffle, ShuffleAlgorithm::TopToRandom}) {
    const auto exact = tv_exact({alg, 1}, 3).epsilon;
    const auto sampled = tv_empirical({alg, 1}, 3, 1000000, rng).epsilon;
    EXPECT_NEAR(exact, sampled, 0.005);
  }
}

TEST(Tv, RiffleMonotoneInRounds) {
  double previous = 1.0;
  for (int h = 0; h <= 8; ++h) {
    const double eps = tv_exact({ShuffleAlgorithm::Riffle, h}, 4).epsilon;
    EXPECT_LE(eps, previous + 1e-15);
    previous = eps;
  }
  EXPECT_LT(previous, 0.01);
}

TEST(Tv, RiffleFormulaEqualsEnumeration) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int h = 0; h <= 5; ++h) {
      EXPECT_NEAR(tv_riffle_formula(h, n).epsilon,
                  tv_exact({ShuffleAlgorithm::Riffle, h}, n).epsilon, 1e-12)
          << "n=" << n << " h=" << h;
    }
  }
}

TEST(Tv, RiffleFormulaLargeDeck) {
  // Finite everywhere, 1 before the cutoff 2^h >= n, then halving per round.
  // The saturated values carry ~1e-10 rounding from the Eulerian recursion.
  double previous = 1.0;
  for (int h = 0; h <= 30; ++h) {
    const double eps = tv_riffle_formula(h, 2000).epsilon;
    ASSERT_TRUE(std::isfinite(eps));
    EXPECT_LE(eps, previous + 1e-9);
    previous = eps;
  }
  EXPECT_NEAR(tv_riffle_formula(10, 2000).epsilon, 1.0, 1e-9);
  const double a = tv_riffle_formula(23, 2000).epsilon;
  const double b = tv_riffle_formula(24, 2000).epsilon;
  EXPECT_NEAR(a / b, 2.0, 0.01);
  EXPECT_LT(a, std::sqrt(10.0) / 2000);
  EXPECT_GT(tv_riffle_formula(22, 2000).epsilon, std::sqrt(10.0) / 2000);
}

TEST(Tv, BudgetExceeded) {
  EXPECT_THROW(tv_exact({ShuffleAlgorithm::FisherYates, 0}, 9), BudgetExceeded);
  RandomSource rng(1);
  EXPECT_THROW(tv_empirical({ShuffleAlgorithm::Riffle, 1}, 3, 0, rng), InvalidArgument);
}

TEST(ConditionalGap, FisherYatesZero) {
  const auto r = check_conditional_gap({ShuffleAlgorithm::FisherYates, 0}, 6, 2, 1, 1);
  EXPECT_NEAR(r.max_gap, 0.0, 1e-12);
  EXPECT_NEAR(r.bound, 0.0, 1e-12);
  EXPECT_TRUE(r.pass);
}

TEST(ConditionalGap, RiffleWithinBound) {
  int h = 0;
  while (tv_exact({ShuffleAlgorithm::Riffle, h}, 4).epsilon > 0.25) ++h;
  const auto r = check_conditional_gap({ShuffleAlgorithm::Riffle, h}, 4, 1, 1, 1);
  EXPECT_TRUE(r.precondition_met);
  EXPECT_GT(r.max_gap, 0.0);
  EXPECT_LE(r.max_gap, r.bound);
  EXPECT_NEAR(r.bound, 4.0 * 4 * r.epsilon / 3, 1e-15);
}

TEST(ConditionalGap, PreconditionFailureIsReported) {
  const auto r = check_conditional_gap({ShuffleAlgorithm::Identity, 0}, 4, 1, 1, 1);
  EXPECT_FALSE(r.precondition_met);
  EXPECT_TRUE(r.pass);
}

TEST(ConditionalGap, LastIterationExcluded) {
  EXPECT_THROW(check_conditional_gap({ShuffleAlgorithm::FisherYates, 0}, 4, 1, 1, 3),
               InvalidArgument);
}

TEST(Lemma31, ConstantValues) {
  RandomSource rng(1);
  const std::vector<double> v(6, 2.5);
  const auto r = verify_lemma31(6, 2, 1, v, 1000, rng);
  EXPECT_NEAR(r.lhs, 0.0, 1e-14);
  EXPECT_NEAR(r.rhs, 0.0, 1e-14);
  EXPECT_TRUE(r.pass);
}

TEST(Lemma31, FirstBatchRightSideZero) {
  RandomSource rng(2);
  const std::vector<double> v{1, 2, 3, 4, 5, 6};
  const auto r = verify_lemma31(6, 2, 0, v, 100000, rng);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Lemma31, SmallSequence) {
  RandomSource rng(3);
  const std::vector<double> v{1, 2, 3, 4, 5, 6};
  const auto r = verify_lemma31(6, 1, 2, v, 100000, rng);
  EXPECT_LE(std::abs(r.lhs - r.rhs), 4 * r.standard_error + 1e-12);
  EXPECT_TRUE(r.pass);
}

TEST(Lemma31, InvalidSizes) {
  RandomSource rng(1);
  const std::vector<double> v(6, 1.0);
  EXPECT_THROW(verify_lemma31(6, 2, 3, v, 10, rng), InvalidArgument);
  EXPECT_THROW(verify_lemma31(5, 2, 0, v, 10, rng), InvalidArgument);
}

TEST(PredictRate, NonConvexSmallS) {
  RateParams p;
  p.n = 2000;
  p.epochs = 10;
  p.rho = 1;
  const auto r = predict_rate(Theorem::T3_3, p);
  EXPECT_EQ(r.dominant.name, "sqrt(gap rho/(Sn))");
  EXPECT_EQ(r.predicted_exponent, -0.5);
}

TEST(PredictRate, StronglyConvexFloor) {
  RateParams p;
  p.n = 1000;
  p.epochs = 1e6;
  p.kappa = 1;
  p.workers = 1;
  p.batch_size = 1;
  const auto r = predict_rate(Theorem::T3_1, p);
  EXPECT_EQ(r.dominant.name, "log(n)/n");
  EXPECT_EQ(r.predicted_exponent, 0.0);
}

TEST(PredictRate, LocalShuffleFloorScalesWithM) {
  RateParams p;
  p.n = 1000;
  p.epochs = 5;
  p.kappa = 10;
  p.workers = 4;
  p.batch_size = 2;
  const auto a = predict_rate(Theorem::T3_1, p);
  const auto b = predict_rate(Theorem::T4_1, p);
  ASSERT_EQ(a.terms.size(), b.terms.size());
  EXPECT_EQ(a.terms[0].value, b.terms[0].value);
  EXPECT_NEAR(b.terms[1].value, 4.0 * a.terms[1].value, 1e-18);
}

TEST(PredictRate, MissingParameter) {
  RateParams p;
  p.n = 100;
  p.epochs = 1;
  EXPECT_THROW(predict_rate(Theorem::T3_1, p), InvalidArgument);
}

TEST(PredictRate, TheoremNamesRoundTrip) {
  for (Theorem t : {Theorem::T3_1, Theorem::T3_2, Theorem::T3_3, Theorem::T4_1,
                    Theorem::T5_2Convex, Theorem::T5_2StronglyConvex, Theorem::T5_2NonConvex,
                    Theorem::T7_1}) {
    EXPECT_EQ(parse_theorem(to_string(t)), t);
  }
}

TEST(Corollaries, Thresholds) {
  const auto c = corollary_predicates(2000, 2, 5, 20, 10, 1e-3);
  EXPECT_FALSE(c.sc_comparable);  // S = 20 > b M kappa^2 / n = 0.5
  EXPECT_TRUE(c.sc_linear_speedup);
  EXPECT_NEAR(c.global_shuffle_threshold, std::sqrt(10.0) / 2000, 1e-15);
  EXPECT_TRUE(c.global_shuffle_sufficient);
  EXPECT_TRUE(c.nonconvex_comparable);
}

TEST(Speedup, Normalization) {
  const std::vector<double> passes{1, 2, 3, 4};
  std::map<std::size_t, MetricsTrace> traces;
  traces[1] = synthetic_trace(passes, {1.0, 0.5, 0.1, 0.01});
  traces[2] = synthetic_trace(passes, {1.0, 0.5, 0.1, 0.01});
  traces[4] = synthetic_trace(passes, {1.0, 0.5, 0.4, 0.1});
  traces[8] = synthetic_trace(passes, {1.0, 0.9, 0.8, 0.7});
  const auto s = speedup(traces, 0.1, TraceMetric::FGap);
  EXPECT_EQ(*s.at(1).speedup, 1.0);
  EXPECT_EQ(*s.at(2).speedup, 2.0);
  EXPECT_EQ(*s.at(4).alpha, 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(*s.at(4).speedup, 3.0);
  EXPECT_FALSE(s.at(8).passes_to_target.has_value());
  EXPECT_FALSE(s.at(8).speedup.has_value());
}

TEST(Speedup, NeedsSingleWorker) {
  std::map<std::size_t, MetricsTrace> traces;
  traces[2] = synthetic_trace({1, 2}, {1.0, 0.1});
  EXPECT_THROW(speedup(traces, 0.5, TraceMetric::FGap), InvalidArgument);
}

TEST(PassesToTarget, FirstCrossing) {
  const auto t = synthetic_trace({0.5, 1.0, 1.5, 2.0}, {3.0, 1.0, 2.0, 0.5});
  EXPECT_EQ(*passes_to_target(t, TraceMetric::DistSq, 1.0), 1.0);
  EXPECT_EQ(*passes_to_target(t, TraceMetric::DistSq, 0.5), 2.0);
  EXPECT_FALSE(passes_to_target(t, TraceMetric::DistSq, 0.1).has_value());
}

TEST(RateExponent, ExactGeometric) {
  std::vector<double> x, y;
  for (int k = 0; k < 10; ++k) {
    x.push_back(std::ldexp(1.0, k));
    y.push_back(std::ldexp(1.0, -k));
  }
  const auto fit = rate_exponent(synthetic_trace(x, y), TraceMetric::FGap, 0, 10);
  EXPECT_NEAR(fit.slope, -1.0, 1e-12);
  EXPECT_EQ(fit.points, 10u);
}

TEST(RateExponent, InverseSquareRoot) {
  std::vector<double> x, y;
  for (int k = 1; k <= 50; ++k) {
    x.push_back(k);
    y.push_back(3.0 / std::sqrt(k));
  }
  const auto fit = rate_exponent(synthetic_trace(x, y), TraceMetric::GradNormSq, 0, 50);
  EXPECT_NEAR(fit.slope, -0.5, 1e-10);
  EXPECT_NEAR(std::exp(fit.intercept), 3.0, 1e-9);
}

TEST(RateExponent, ExcludesNonPositive) {
  std::vector<double> x, y;
  for (int k = 1; k <= 12; ++k) {
    x.push_back(k);
    y.push_back(k == 3 ? 0.0 : 1.0 / k);
  }
  const auto fit = rate_exponent(synthetic_trace(x, y), TraceMetric::FGap, 0, 12);
  EXPECT_EQ(fit.excluded, 1u);
  EXPECT_EQ(fit.points, 11u);
  EXPECT_NEAR(fit.slope, -1.0, 1e-12);
}

TEST(RateExponent, TooFewPoints) {
  const auto t = synthetic_trace({1, 2, 4, 8}, {1, 0.5, 0.25, 0.125});
  EXPECT_THROW(rate_exponent(t, TraceMetric::FGap, 0, 4), InvalidArgument);
}

TEST(RunningMean, Values) {
  const auto t = synthetic_trace({1, 2, 3}, {3.0, 1.0, 2.0});
  EXPECT_EQ(running_mean_grad_norm_sq(t), (std::vector<double>{3.0, 2.0, 2.0}));
}
