#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "dsgd/datasets.hpp"
#include "dsgd/error.hpp"
#include "dsgd/objectives.hpp"

using namespace dsgd;

namespace {

Dataset make_data(std::size_t dim, std::vector<double> features, std::vector<double> labels) {
  Dataset d;
  d.dim = dim;
  d.features = std::move(features);
  d.labels = std::move(labels);
  d.validate();
  return d;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Central differences of F.
ParamVector numeric_gradient(const ObjectiveSpec& spec, const Dataset& data, ParamVector w,
                             double h) {
  ParamVector g(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double orig = w[k];
    w[k] = orig + h;
    const double up = full_objective(spec, data, w).value;
    w[k] = orig - h;
    const double down = full_objective(spec, data, w).value;
    w[k] = orig;
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

double relative_error(const ParamVector& a, const ParamVector& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    scale += b[k] * b[k];
  }
  return std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12);
}

}  // namespace

TEST(Logistic, ZeroWeightsGiveLogTwo) {
  const auto data = make_data(3, {0.5, -1.0, 2.0}, {1.0});
  const auto spec = ObjectiveSpec::logistic(0.0);
  const ParamVector w(3, 0.0);
  const auto r = loss_and_grad_single(spec, data, w, 0);
  EXPECT_NEAR(r.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.gradient[0], -0.25, 1e-15);
  EXPECT_NEAR(r.gradient[1], 0.5, 1e-15);
  EXPECT_NEAR(r.gradient[2], -1.0, 1e-15);
}

TEST(Logistic, ClosedFormPoint) {
  // lambda = 0.1, w = (1, 0), x = (2, 0), y = -1: margin y<w,x> = -2.
  const auto data = make_data(2, {2.0, 0.0}, {-1.0});
  const auto spec = ObjectiveSpec::logistic(0.1);
  const ParamVector w{1.0, 0.0};
  const auto r = loss_and_grad_single(spec, data, w, 0);
  const double value = std::log1p(std::exp(2.0)) + 0.05;
  const double sig = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(r.value, value, 1e-14);
  EXPECT_NEAR(r.gradient[0], 2.0 * sig + 0.1, 1e-14);
  EXPECT_NEAR(r.gradient[1], 0.0, 1e-15);
  const auto fd = numeric_gradient(spec, data, w, 1e-6);
  EXPECT_LT(relative_error(r.gradient, fd), 1e-8);
}

TEST(Logistic, LargeMarginsStayFinite) {
  const auto data = make_data(1, {1000.0, -1000.0}, {-1.0, -1.0});
  const auto spec = ObjectiveSpec::logistic(0.0);
  const auto r = full_objective(spec, data, ParamVector{1.0});
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_NEAR(r.value, 500.0, 1e-9);
  EXPECT_TRUE(std::isfinite(r.gradient[0]));
}

TEST(Quadratic, ZeroAtOwnCenter) {
  const auto data = make_data(1, {3.0}, {0.0});
  const auto spec = ObjectiveSpec::quadratic({2.0});
  const auto r = loss_and_grad_single(spec, data, ParamVector{3.0}, 0);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.gradient[0], 0.0);
}

TEST(Quadratic, BatchIsSumOfClosedForms) {
  const auto data = make_data(2, {1.0, -2.0, 0.5, 4.0}, {0.0, 0.0});
  const auto spec = ObjectiveSpec::quadratic({1.0, 3.0});
  const ParamVector w{0.25, 1.0};
  const std::vector<std::size_t> idx{0, 1};
  const auto r = loss_and_grad_batch(spec, data, w, idx);
  // f_i = 0.5 sum_k a_k (w_k - c_ik)^2
  const double f0 = 0.5 * (1.0 * 0.75 * 0.75 + 3.0 * 3.0 * 3.0);
  const double f1 = 0.5 * (1.0 * 0.25 * 0.25 + 3.0 * 3.0 * 3.0);
  EXPECT_NEAR(r.value, f0 + f1, 1e-14);
  EXPECT_NEAR(r.gradient[0], (0.25 - 1.0) + (0.25 - 0.5), 1e-14);
  EXPECT_NEAR(r.gradient[1], 3.0 * 3.0 + 3.0 * (-3.0), 1e-14);
}

TEST(Quadratic, AllCentersEqual) {
  const auto data = make_data(2, {1.5, -0.5, 1.5, -0.5, 1.5, -0.5}, {0, 0, 0});
  const auto spec = ObjectiveSpec::quadratic({1.0, 2.0});
  const auto r = full_objective(spec, data, ParamVector{1.5, -0.5});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.gradient[0], 0.0);
  EXPECT_EQ(r.gradient[1], 0.0);
}

TEST(Quadratic, ReferenceOptimumIsMeanOfCenters) {
  const auto data = make_data(1, {1.0, 3.0}, {0.0, 0.0});
  const auto spec = ObjectiveSpec::quadratic({2.0});
  const auto ref = solve_reference_optimum(spec, data);
  EXPECT_NEAR(ref.w_star[0], 2.0, 1e-15);
  // F(2) = mean of 0.5 * 2 * 1 = 1
  EXPECT_NEAR(ref.f_star, 1.0, 1e-15);
}

TEST(Quadratic, ConstantsFromSpectrum) {
  const auto data = quadratic_centers(10, 2, 1, 1.0);
  RandomSource rng(1);
  const auto spec = estimate_constants(ObjectiveSpec::quadratic({1.0, 4.0}), data, 5, 1.0, rng);
  EXPECT_EQ(*spec.constants.mu, 1.0);
  EXPECT_EQ(*spec.constants.rho, 4.0);
  EXPECT_EQ(*spec.constants.kappa, 4.0);
}

TEST(Objectives, SingletonBatchMatchesSingle) {
  const auto data = gaussian_blobs(9, 4, 3, 2, 1.0);
  MlpParams p;
  p.hidden = {5};
  const auto spec = ObjectiveSpec::mlp(p);
  const auto w = default_initial_point(spec, data, 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<std::size_t> one{i};
    const auto a = loss_and_grad_single(spec, data, w, i);
    const auto b = loss_and_grad_batch(spec, data, w, one);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.gradient, b.gradient);
  }
}

TEST(Objectives, FullBatchIsNTimesMean) {
  const auto data = synthetic_logistic(20, 5, 4, 1.0, 0.1);
  const auto spec = ObjectiveSpec::logistic(0.05);
  ParamVector w{0.1, -0.2, 0.3, 0.0, 0.5};
  const auto idx = all_indices(data.size());
  const auto sum = loss_and_grad_batch(spec, data, w, idx);
  const auto mean = full_objective(spec, data, w);
  EXPECT_NEAR(sum.value, 20.0 * mean.value, 1e-12);
  for (std::size_t k = 0; k < w.size(); ++k) {
    EXPECT_NEAR(sum.gradient[k], 20.0 * mean.gradient[k], 1e-12);
  }
}

TEST(Objectives, LogisticTwoSamplesIsMean) {
  const auto data = make_data(2, {1.0, 2.0, -1.0, 0.5}, {1.0, -1.0});
  const auto spec = ObjectiveSpec::logistic(0.2);
  const ParamVector w{0.3, -0.7};
  const auto a = loss_and_grad_single(spec, data, w, 0);
  const auto b = loss_and_grad_single(spec, data, w, 1);
  const auto f = full_objective(spec, data, w);
  EXPECT_NEAR(f.value, 0.5 * (a.value + b.value), 1e-15);
  EXPECT_NEAR(f.gradient[0], 0.5 * (a.gradient[0] + b.gradient[0]), 1e-15);
  EXPECT_NEAR(f.gradient[1], 0.5 * (a.gradient[1] + b.gradient[1]), 1e-15);
}

class MlpGradient : public ::testing::TestWithParam<Activation> {};

TEST_P(MlpGradient, MatchesFiniteDifferences) {
  const auto data = gaussian_blobs(12, 4, 3, 7, 2.0);
  MlpParams p;
  p.hidden = {6, 5};
  p.activation = GetParam();
  p.lambda = 0.01;
  const auto spec = ObjectiveSpec::mlp(p);
  RandomSource rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    ParamVector w(parameter_dim(spec, data));
    for (double& x : w) x = 0.5 * rng.normal();
    const auto exact = full_objective(spec, data, w).gradient;
    const auto fd = numeric_gradient(spec, data, w, 1e-5);
    EXPECT_LT(relative_error(exact, fd), 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, MlpGradient,
                         ::testing::Values(Activation::Tanh, Activation::Sigmoid));

TEST(Mlp, ParameterCount) {
  const auto data = gaussian_blobs(6, 10, 3, 1, 1.0);
  const auto spec = ObjectiveSpec::mlp({});
  // 10 -> 16 -> 8 -> 3 with biases
  EXPECT_EQ(parameter_dim(spec, data), 10u * 16 + 16 + 16 * 8 + 8 + 8 * 3 + 3);
}

TEST(Mlp, ReferenceOptimumRejected) {
  const auto data = gaussian_blobs(6, 2, 3, 1, 1.0);
  EXPECT_THROW(solve_reference_optimum(ObjectiveSpec::mlp({}), data), InvalidArgument);
}

TEST(Logistic, ReferenceOptimumHasSmallGradient) {
  // separable data; lambda > 0 keeps the optimum finite
  const auto data = synthetic_logistic(60, 3, 9, 1.0, 0.0);
  const auto spec = ObjectiveSpec::logistic(0.01);
  const auto ref = solve_reference_optimum(spec, data, 1e-9);
  const auto g = full_objective(spec, data, ref.w_star).gradient;
  double norm = 0.0;
  for (double x : g) norm += x * x;
  EXPECT_LE(std::sqrt(norm), 1e-9);
  EXPECT_NEAR(full_objective(spec, data, ref.w_star).value, ref.f_star, 1e-15);
}

TEST(Constants, SingleSampleBoundsGradientAtOrigin) {
  const auto data = synthetic_logistic(30, 4, 2, 1.0, 0.05);
  const auto spec = ObjectiveSpec::logistic(0.1);
  RandomSource rng(4);
  const auto est = estimate_constants(spec, data, 1, 1.0, rng);
  const ParamVector zero(4, 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double s = 0.0;
    for (double g : loss_and_grad_single(spec, data, zero, i).gradient) s += g * g;
    worst = std::max(worst, s);
  }
  EXPECT_GE(*est.constants.b_sq, worst);
}

TEST(Constants, LogisticEstimatesStableAcrossSeeds) {
  const auto data = synthetic_logistic(2000, 20, 1, 1.0, 0.05);
  const auto spec = ObjectiveSpec::logistic(1.0 / std::sqrt(2000.0));
  RandomSource a(1), b(2);
  const auto ea = estimate_constants(spec, data, 20, 1.0, a);
  const auto eb = estimate_constants(spec, data, 20, 1.0, b);
  auto close = [](double x, double y) { return std::abs(x - y) <= 0.2 * std::max(x, y); };
  EXPECT_TRUE(close(*ea.constants.rho, *eb.constants.rho));
  EXPECT_TRUE(close(*ea.constants.b_sq, *eb.constants.b_sq));
  EXPECT_TRUE(close(*ea.constants.lipschitz, *eb.constants.lipschitz));
}

TEST(Dataset, ValidateRejectsBadShape) {
  Dataset d;
  d.dim = 2;
  d.features = {1.0, 2.0, 3.0};
  d.labels = {1.0, -1.0};
  EXPECT_THROW(d.validate(), InvalidArgument);
}

TEST(Datasets, GeneratorsAreDeterministic) {
  EXPECT_EQ(quadratic_centers(50, 3, 5, 1.0).features, quadratic_centers(50, 3, 5, 1.0).features);
  EXPECT_EQ(synthetic_logistic(50, 3, 5, 1.0, 0.1).labels,
            synthetic_logistic(50, 3, 5, 1.0, 0.1).labels);
  EXPECT_NE(gaussian_blobs(30, 3, 3, 5, 1.0).features, gaussian_blobs(30, 3, 3, 6, 1.0).features);
}

TEST(Datasets, SortedOrder) {
  const auto q = quadratic_centers(40, 2, 3, 1.0, DataOrder::Sorted);
  for (std::size_t i = 1; i < q.size(); ++i) EXPECT_LE(q.row(i - 1)[0], q.row(i)[0]);
  const auto b = gaussian_blobs(30, 2, 3, 3, 1.0, DataOrder::Sorted);
  for (std::size_t i = 1; i < b.size(); ++i) EXPECT_LE(b.labels[i - 1], b.labels[i]);
}

TEST(Datasets, GeometricSpectrumEndpoints) {
  const auto s = geometric_spectrum(5, 1.0, 16.0);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_DOUBLE_EQ(s.front(), 1.0);
  EXPECT_DOUBLE_EQ(s[2], 4.0);
  EXPECT_DOUBLE_EQ(s.back(), 16.0);
}
