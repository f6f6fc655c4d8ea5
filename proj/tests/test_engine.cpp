#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "dsgd/datasets.hpp"
#include "dsgd/engine.hpp"

using namespace dsgd;

namespace {

using Indices = std::vector<std::size_t>;

Dataset scalar_centers(std::vector<double> centers) {
  Dataset d;
  d.dim = 1;
  d.features = std::move(centers);
  d.labels.assign(d.features.size(), 0.0);
  return d;
}

TrainState one_step(const TrainState& s, const std::vector<Indices>& batches,
                    const ObjectiveSpec& spec, const Dataset& data, double eta) {
  std::vector<std::span<const std::size_t>> views(batches.begin(), batches.end());
  return step(s, views, spec, data, eta, 100);
}

}  // namespace

TEST(Schedule, StronglyConvexDecay) {
  EXPECT_DOUBLE_EQ(lr_at(LrSchedule::strongly_convex(1.0), 1, 4, 10), 0.5);
  EXPECT_DOUBLE_EQ(lr_at(LrSchedule::strongly_convex(2.0), 2, 1, 10), 2.0 / (2.0 * 11));
}

TEST(Schedule, ConvexSqrtDecay) {
  EXPECT_DOUBLE_EQ(lr_at(LrSchedule::convex_sqrt(1.0), 1, 1, 10), 1.0);
  EXPECT_DOUBLE_EQ(lr_at(LrSchedule::convex_sqrt(4.0), 1, 4, 10), 1.0);
}

TEST(Schedule, NonConvexCapSaturates) {
  NonConvexParams p{1e12, 1.0, 1, 1, 10, 5, 1.0};
  const auto s = LrSchedule::non_convex_constant(p);
  EXPECT_EQ(s.eta, 1.0 / (6.0 * 1e12));
  EXPECT_EQ(lr_at(s, 3, 7, 10), s.eta);
}

TEST(Schedule, NonConvexBalancedTerm) {
  NonConvexParams p{1.0, 100.0, 2, 3, 50, 4, 0.5};
  const auto s = LrSchedule::non_convex_constant(p);
  const double T = 50.0, ST = 200.0;
  const double noise = (3.0 * 100.0 / 6.0) * (1.0 + 584.0 * std::log(T) / T);
  EXPECT_NEAR(s.eta, std::sqrt(2.0 * 0.5 / noise) / std::sqrt(ST), 1e-15);
}

TEST(Schedule, ScaleWithWorkersUsesSingleWorkerRate) {
  NonConvexParams single{1.0, 100.0, 2, 1, 200, 4, 0.5};
  NonConvexParams scaled = single;
  scaled.workers = 4;
  scaled.iterations_per_epoch = 50;
  scaled.scale_with_workers = true;
  EXPECT_NEAR(LrSchedule::non_convex_constant(scaled).eta,
              4.0 * LrSchedule::non_convex_constant(single).eta, 1e-15);
}

TEST(Schedule, RejectsBadParameters) {
  EXPECT_THROW(LrSchedule::strongly_convex(0.0), InvalidArgument);
  EXPECT_THROW(LrSchedule::convex_sqrt(-1.0), InvalidArgument);
  EXPECT_THROW(LrSchedule::constant(0.0), InvalidArgument);
  EXPECT_THROW(lr_at(LrSchedule::constant(1.0), 1, 0, 10), InvalidArgument);
  EXPECT_THROW(lr_at(LrSchedule::constant(1.0), 1, 11, 10), InvalidArgument);
}

TEST(Step, HandArithmetic) {
  // f_i = (w - c_i)^2 / 2, batches {c=1}, {c=3}, eta = 1: w' = (1 + 3) / 2
  const auto data = scalar_centers({1.0, 3.0});
  const auto spec = ObjectiveSpec::quadratic({1.0});
  const auto next = one_step(TrainState::start({0.0}), {{0}, {1}}, spec, data, 1.0);
  EXPECT_DOUBLE_EQ(next.w[0], 2.0);
  EXPECT_EQ(next.count, 1u);
  EXPECT_DOUBLE_EQ(next.iterate_sum[0], 2.0);
}

TEST(Step, ZeroGradientLeavesWUnchanged) {
  const auto data = scalar_centers({5.0, 5.0});
  const auto spec = ObjectiveSpec::quadratic({3.0});
  const auto next = one_step(TrainState::start({5.0}), {{0, 1}}, spec, data, 0.7);
  EXPECT_EQ(next.w[0], 5.0);
}

TEST(Step, MatchesBatchGradientUpdate) {
  const auto data = synthetic_logistic(12, 4, 3, 1.0, 0.1);
  const auto spec = ObjectiveSpec::logistic(0.1);
  const ParamVector w{0.2, -0.1, 0.4, 0.0};
  const std::vector<Indices> batches{{0, 5, 7}, {1, 2, 11}};
  const auto next = one_step(TrainState::start(w), batches, spec, data, 0.3);
  const Indices all{0, 5, 7, 1, 2, 11};
  const auto g = loss_and_grad_batch(spec, data, w, all).gradient;
  for (std::size_t k = 0; k < w.size(); ++k) {
    EXPECT_NEAR(next.w[k], w[k] - 0.3 / 6.0 * g[k], 1e-15);
  }
}

TEST(Step, EpochCounterRolls) {
  const auto data = scalar_centers({1.0, 2.0});
  const auto spec = ObjectiveSpec::quadratic({1.0});
  std::vector<Indices> batches{{0}};
  std::vector<std::span<const std::size_t>> views(batches.begin(), batches.end());
  auto s = TrainState::start({0.0});
  s = step(s, views, spec, data, 0.1, 2);
  EXPECT_EQ(s.epoch, 1u);
  EXPECT_EQ(s.iter, 1u);
  s = step(s, views, spec, data, 0.1, 2);
  EXPECT_EQ(s.epoch, 2u);
  EXPECT_EQ(s.iter, 0u);
}

TEST(Step, NonFiniteAborts) {
  const auto data = scalar_centers({1.0});
  const auto spec = ObjectiveSpec::quadratic({1.0});
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(one_step(TrainState::start({inf}), {{0}}, spec, data, 1.0), NumericError);
}

class Aggregation : public ::testing::TestWithParam<int> {};

TEST_P(Aggregation, WorkersVersusMergedBatch) {
  const std::size_t n = 24;
  ObjectiveSpec spec;
  Dataset data;
  switch (GetParam()) {
    case 0:
      data = quadratic_centers(n, 3, 2, 1.0);
      spec = ObjectiveSpec::quadratic({1.0, 2.0, 5.0});
      break;
    case 1:
      data = synthetic_logistic(n, 3, 2, 1.0, 0.1);
      spec = ObjectiveSpec::logistic(0.05);
      break;
    default:
      data = gaussian_blobs(n, 3, 3, 2, 1.0);
      MlpParams p;
      p.hidden = {4};
      spec = ObjectiveSpec::mlp(p);
      break;
  }
  const auto w0 = default_initial_point(spec, data, 3);
  const StreamSpec split{Regime::GlobalShuffle, n, 4, 3, 9, {}, 5};
  const auto stream = build_stream(split);
  // Same index multiset, one worker.
  auto merged_spec = split;
  merged_spec.workers = 1;
  merged_spec.batch_size = 12;
  std::vector<std::size_t> flat;
  std::vector<Permutation> none;
  for (std::size_t s = 0; s < stream.epochs(); ++s) {
    for (std::size_t t = 0; t < stream.iterations(); ++t) {
      const auto it = stream.iteration(s, t);
      flat.insert(flat.end(), it.begin(), it.end());
    }
  }
  const BatchStream merged(merged_spec, flat, none);
  const auto schedule = LrSchedule::constant(0.1);
  const auto a = run(stream, spec, data, schedule, w0);
  const auto b = run(merged, spec, data, schedule, w0);
  ASSERT_EQ(a.records.size(), 9u * 2);
  for (std::size_t k = 0; k < w0.size(); ++k) EXPECT_NEAR(a.final_w[k], b.final_w[k], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Families, Aggregation, ::testing::Values(0, 1, 2));

TEST(Run, SingleFullBatchStepIsGradientDescent) {
  const auto data = synthetic_logistic(10, 3, 1, 1.0, 0.0);
  const auto spec = ObjectiveSpec::logistic(0.1);
  const ParamVector w0{0.3, 0.1, -0.2};
  const auto stream = build_stream({Regime::GlobalShuffle, 10, 1, 10, 1, {}, 1});
  const auto trace = run(stream, spec, data, LrSchedule::constant(0.5), w0);
  ASSERT_EQ(trace.records.size(), 1u);
  const auto g = full_objective(spec, data, w0).gradient;
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(trace.final_w[k], w0[k] - 0.5 * g[k], 1e-15);
  EXPECT_NEAR(trace.records[0].objective, full_objective(spec, data, trace.final_w).value, 1e-15);
  EXPECT_DOUBLE_EQ(trace.records[0].effective_passes, 1.0);
}

TEST(Run, Deterministic) {
  const auto data = quadratic_centers(40, 2, 1, 1.0);
  const auto spec = ObjectiveSpec::quadratic({1.0, 10.0});
  const auto ref = solve_reference_optimum(spec, data);
  const StreamSpec ss{Regime::GlobalShuffle, 40, 2, 2, 4, {}, 9};
  const auto a = run(build_stream(ss), spec, data, LrSchedule::strongly_convex(1.0), {0.0, 0.0}, {ref, {}});
  const auto b = run(build_stream(ss), spec, data, LrSchedule::strongly_convex(1.0), {0.0, 0.0}, {ref, {}});
  std::ostringstream ca, cb;
  write_trace_csv(ca, a);
  write_trace_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(a.final_w, b.final_w);
}

TEST(Run, ScalarQuadraticEpochEndsDecrease) {
  const auto data = quadratic_centers(20, 1, 4, 1.0);
  const auto spec = ObjectiveSpec::quadratic({1.0});
  const auto ref = solve_reference_optimum(spec, data);
  const auto stream = build_stream({Regime::GlobalShuffle, 20, 1, 1, 3, {}, 2});
  const auto trace = run(stream, spec, data, LrSchedule::strongly_convex(1.0), {5.0}, {ref, {}});
  double previous = std::numeric_limits<double>::infinity();
  for (const auto& r : trace.records) {
    if (r.iter != 20) continue;
    EXPECT_LT(*r.dist_sq, previous);
    previous = *r.dist_sq;
  }
}

TEST(Run, AveragedIterateIsMeanOfIterates) {
  const auto data = synthetic_logistic(20, 2, 5, 1.0, 0.1);
  const auto spec = ObjectiveSpec::logistic(0.1);
  const StreamSpec ss{Regime::IIDSampling, 20, 2, 2, 3, {}, 4};
  const auto stream = build_stream(ss);
  const auto schedule = LrSchedule::constant(0.2);
  const auto trace = run(stream, spec, data, schedule, {0.0, 0.0});

  // Replay the steps by hand.
  auto state = TrainState::start({0.0, 0.0});
  ParamVector sum(2, 0.0);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t t = 0; t < stream.iterations(); ++t) {
      std::vector<std::span<const std::size_t>> views{stream.batch(s, t, 0), stream.batch(s, t, 1)};
      state = step(state, views, spec, data, 0.2, stream.iterations());
      sum[0] += state.w[0];
      sum[1] += state.w[1];
    }
  }
  const double count = 3.0 * stream.iterations();
  EXPECT_NEAR(trace.averaged_w[0], sum[0] / count, 1e-12);
  EXPECT_NEAR(trace.averaged_w[1], sum[1] / count, 1e-12);
  EXPECT_EQ(trace.final_w, state.w);
}

TEST(Run, MetricsAgainstReference) {
  const auto data = quadratic_centers(10, 2, 3, 1.0);
  const auto spec = ObjectiveSpec::quadratic({1.0, 2.0});
  const auto ref = solve_reference_optimum(spec, data);
  const auto stream = build_stream({Regime::GlobalShuffle, 10, 1, 5, 2, {}, 1});
  const auto trace = run(stream, spec, data, LrSchedule::constant(0.1), {1.0, 1.0}, {ref, {}});
  for (const auto& r : trace.records) {
    ASSERT_TRUE(r.f_gap && r.dist_sq);
    EXPECT_GE(*r.f_gap, -1e-15);
    EXPECT_GE(r.grad_norm_sq, 0.0);
    EXPECT_DOUBLE_EQ(r.lr, 0.1);
  }
  const auto& last = trace.records.back();
  EXPECT_NEAR(*last.f_gap, last.objective - ref.f_star, 1e-15);
  EXPECT_DOUBLE_EQ(last.effective_passes, 2.0);
}

TEST(Run, LowerBoundGivesGapButNoDistance) {
  const auto data = gaussian_blobs(12, 2, 3, 1, 1.0);
  MlpParams p;
  p.hidden = {3};
  const auto spec = ObjectiveSpec::mlp(p);
  const auto stream = build_stream({Regime::GlobalShuffle, 12, 1, 4, 1, {}, 1});
  const auto trace = run(stream, spec, data, LrSchedule::constant(0.1),
                         default_initial_point(spec, data, 1), {{}, 0.0});
  EXPECT_TRUE(trace.records.back().f_gap.has_value());
  EXPECT_FALSE(trace.records.back().dist_sq.has_value());
}

TEST(Run, DivergenceAbortsWithPartialTrace) {
  const auto data = quadratic_centers(10, 1, 1, 1.0);
  const auto spec = ObjectiveSpec::quadratic({1.0});
  const auto stream = build_stream({Regime::GlobalShuffle, 10, 1, 1, 200, {}, 1});
  try {
    run(stream, spec, data, LrSchedule::constant(3.0), {1.0});
    FAIL() << "expected NumericAbort";
  } catch (const NumericAbort& e) {
    EXPECT_GT(e.fault().epoch, 0u);
    EXPECT_FALSE(e.partial().records.empty());
    for (const auto& r : e.partial().records) EXPECT_TRUE(std::isfinite(r.objective));
  }
}

TEST(TraceCsv, Header) {
  const auto data = scalar_centers({1.0, 2.0});
  const auto stream = build_stream({Regime::GlobalShuffle, 2, 1, 1, 1, {}, 1});
  const auto trace = run(stream, ObjectiveSpec::quadratic({1.0}), data, LrSchedule::constant(0.5), {0.0});
  std::ostringstream out;
  write_trace_csv(out, trace);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,iter,effective_passes,f_gap,dist_sq,grad_norm_sq,lr");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 2);
}
