#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsgd/engine.hpp"
#include "dsgd/random.hpp"
#include "dsgd/shuffling.hpp"

namespace dsgd {

// ---------------------------------------------------------------------------
// Shuffling error: total-variation distance between a shuffler's output
// distribution and the uniform distribution on permutations of n items.

enum class TvMethod { ExactEnumeration, Empirical, RisingSequenceFormula };

std::string to_string(TvMethod method);

struct ShufflingErrorReport {
  double epsilon = 0.0;
  TvMethod method = TvMethod::ExactEnumeration;
  std::size_t n = 0;
  ShufflerSpec spec;
  std::uint64_t trials = 0;  // empirical only
  // Plug-in estimates of TV are biased upward; the bias is of the order of
  // sqrt(n! / trials). Empty for exact methods.
  std::optional<double> bias_scale;
  std::string note;
};

ShufflingErrorReport tv_exact(const ShufflerSpec& spec, std::size_t n,
                              const EnumerationLimits& limits = {});

// Plug-in estimate from the histogram of `trials` sampled permutations, n <= 8.
ShufflingErrorReport tv_empirical(const ShufflerSpec& spec, std::size_t n, std::uint64_t trials,
                                  RandomSource& rng);

// Exact TV of h GSR riffles for any n, from the rising-sequence formula: a
// permutation with r rising sequences has probability C(2^h + n - r, n) / 2^(h n),
// and there are A(n, r) such permutations (Eulerian numbers). Evaluated in log
// space.
ShufflingErrorReport tv_riffle_formula(int rounds, std::size_t n);

// ---------------------------------------------------------------------------
// Conditional-gap bound for insufficient shuffling.

struct ConditionalGapReport {
  std::size_t n = 0, workers = 0, batch_size = 0, t = 0;
  double epsilon = 0.0;
  double precondition_threshold = 0.0;  // b M / n
  bool precondition_met = false;
  double max_gap = 0.0;
  double bound = 0.0;                   // 4 n eps / (n - b M t)
  std::size_t histories = 0;
  // True if the bound holds, or vacuously when the precondition fails.
  bool pass = false;
};

// Compares the shuffler's conditional batch-tuple probabilities with the
// uniform ones over every history of length t and every candidate tuple.
// Requires t + 1 < T.
ConditionalGapReport check_conditional_gap(const ShufflerSpec& spec, std::size_t n,
                                           std::size_t workers, std::size_t batch_size,
                                           std::size_t t, const EnumerationLimits& limits = {});

// ---------------------------------------------------------------------------
// Expectation identity for a random permutation sigma of n values:
//   E[ mean(s) - (1/b) sum_j s_sigma(tb+j) ] = (tb/n) E[ s_{1:tb} - s_{tb+1:n} ]
// where s_{a:c} averages the values at permuted positions a..c.

struct Lemma31Report {
  std::size_t n = 0, b = 0, t = 0;
  std::uint64_t trials = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  // Standard error of the paired per-trial difference lhs_k - rhs_k.
  double standard_error = 0.0;
  bool pass = false;  // |lhs - rhs| <= 4 SE (plus rounding slack)
};

Lemma31Report verify_lemma31(std::size_t n, std::size_t b, std::size_t t,
                             std::span<const double> values, std::uint64_t trials,
                             RandomSource& rng);

// ---------------------------------------------------------------------------
// Dominant-term rate predictions with all O(.) constants set to 1.

enum class Theorem { T3_1, T3_2, T3_3, T4_1, T5_2Convex, T5_2StronglyConvex, T5_2NonConvex, T7_1 };

std::string to_string(Theorem theorem);
Theorem parse_theorem(const std::string& name);

struct RateParams {
  std::optional<double> n, workers, batch_size, epochs, kappa, mu, rho, epsilon;
  // F(w_0) - F*, used by the non-convex bound; defaults to 1.
  std::optional<double> initial_gap;
};

struct RateTerm {
  std::string name;
  double value = 0.0;
  // Power of S in the term, log factors ignored.
  double s_exponent = 0.0;
};

struct RatePrediction {
  Theorem theorem = Theorem::T3_1;
  std::vector<RateTerm> terms;  // a min{.,.} group appears as one term
  RateTerm dominant;
  // Slope of the dominant term against effective passes (= S at fixed n, M, b).
  double predicted_exponent = 0.0;
  double total = 0.0;
};

RatePrediction predict_rate(Theorem theorem, const RateParams& params);

// Heuristic (constants = 1) comparability and speedup predicates.
struct CorollaryPredicates {
  bool sc_comparable = false;        // S <= b M kappa^2 / n
  bool sc_linear_speedup = false;    // S >= b M max{1, kappa^2 / n}
  bool convex_comparable = false;    // S <= M b / sqrt(n)
  bool convex_linear_speedup = false;// S > M b / sqrt(n)
  bool nonconvex_comparable = false; // S < n
  bool nonconvex_linear_speedup = false;
  bool local_nonconvex_speedup = false;        // S < n / M
  bool global_shuffle_sufficient = false;      // eps <= sqrt(b M) / n
  double global_shuffle_threshold = 0.0;
};

CorollaryPredicates corollary_predicates(double n, double workers, double batch_size,
                                         double epochs, double kappa, double epsilon);

// ---------------------------------------------------------------------------
// Trace analysis.

enum class TraceMetric { FGap, GradNormSq, DistSq };

std::string to_string(TraceMetric metric);
TraceMetric parse_trace_metric(const std::string& name);

std::optional<double> metric_value(const MetricRecord& record, TraceMetric metric);

// Effective passes at the first record whose metric is <= target.
std::optional<double> passes_to_target(const MetricsTrace& trace, TraceMetric metric,
                                       double target);

struct SpeedupEntry {
  std::optional<double> passes_to_target;
  std::optional<double> alpha;    // passes(M) / passes(1)
  std::optional<double> speedup;  // M / alpha
};

// Needs a trace for M = 1. Workers whose trace never reaches the target get
// empty fields.
std::map<std::size_t, SpeedupEntry> speedup(const std::map<std::size_t, MetricsTrace>& traces,
                                            double target, TraceMetric metric);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
  std::size_t excluded = 0;  // non-positive metric values skipped
};

// Least-squares slope of log(metric) against log(effective passes) over the
// records [first, last). Needs at least 10 positive points.
SlopeFit rate_exponent(const MetricsTrace& trace, TraceMetric metric, std::size_t first,
                       std::size_t last);
SlopeFit loglog_slope(std::span<const double> x, std::span<const double> y);

// Running mean of grad_norm_sq, as in the non-convex bound.
std::vector<double> running_mean_grad_norm_sq(const MetricsTrace& trace);

}  // namespace dsgd
