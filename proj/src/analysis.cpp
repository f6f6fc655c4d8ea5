#include "dsgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dsgd/error.hpp"
#include "dsgd/schedule.hpp"

namespace dsgd {

std::string to_string(TvMethod method) {
  switch (method) {
    case TvMethod::ExactEnumeration: return "exact-enumeration";
    case TvMethod::Empirical: return "empirical";
    case TvMethod::RisingSequenceFormula: return "rising-sequence-formula";
  }
  return "unknown";
}

ShufflingErrorReport tv_exact(const ShufflerSpec& spec, std::size_t n,
                              const EnumerationLimits& limits) {
  const PermutationDistribution dist = enumerate_distribution(spec, n, limits);
  const double uniform = 1.0 / static_cast<double>(dist.probability.size());
  double sum = 0.0;
  for (double p : dist.probability) sum += std::abs(p - uniform);
  ShufflingErrorReport report;
  report.epsilon = std::clamp(0.5 * sum, 0.0, 1.0);
  report.method = TvMethod::ExactEnumeration;
  report.n = n;
  report.spec = spec;
  return report;
}

ShufflingErrorReport tv_empirical(const ShufflerSpec& spec, std::size_t n, std::uint64_t trials,
                                  RandomSource& rng) {
  if (trials < 1) throw InvalidArgument("tv_empirical needs trials >= 1");
  if (n < 1 || n > 8) throw InvalidArgument("tv_empirical supports 1 <= n <= 8");
  const std::uint64_t support = factorial(n);
  std::vector<std::uint64_t> counts(support, 0);
  for (std::uint64_t k = 0; k < trials; ++k) {
    ++counts[permutation_rank(shuffle(spec, n, rng).mapping())];
  }
  const double uniform = 1.0 / static_cast<double>(support);
  double sum = 0.0;
  for (std::uint64_t c : counts) {
    sum += std::abs(static_cast<double>(c) / static_cast<double>(trials) - uniform);
  }
  ShufflingErrorReport report;
  report.epsilon = std::clamp(0.5 * sum, 0.0, 1.0);
  report.method = TvMethod::Empirical;
  report.n = n;
  report.spec = spec;
  report.trials = trials;
  report.bias_scale = std::sqrt(static_cast<double>(support) / static_cast<double>(trials));
  report.note = "plug-in estimate; biased upward by sampling noise";
  if (trials < support * 100) report.note += "; fewer than 100 n! trials";
  return report;
}

ShufflingErrorReport tv_riffle_formula(int rounds, std::size_t n) {
  if (rounds < 0) throw InvalidArgument("rounds must be >= 0");
  if (n < 1) throw InvalidArgument("n must be >= 1");
  if (rounds > 60) throw InvalidArgument("rounds > 60 not supported by the formula evaluation");

  // log of the fraction of permutations with k descents (k + 1 rising
  // sequences): log A(n, k) - log n!, built row by row.
  std::vector<double> log_frac(1, 0.0);
  for (std::size_t m = 2; m <= n; ++m) {
    std::vector<double> next(m, -std::numeric_limits<double>::infinity());
    const double log_m = std::log(static_cast<double>(m));
    for (std::size_t k = 0; k < m; ++k) {
      // A(m, k) = (k + 1) A(m-1, k) + (m - k) A(m-1, k-1)
      double a = -std::numeric_limits<double>::infinity();
      double c = -std::numeric_limits<double>::infinity();
      if (k < m - 1) a = std::log(static_cast<double>(k + 1)) + log_frac[k];
      if (k >= 1) c = std::log(static_cast<double>(m - k)) + log_frac[k - 1];
      const double hi = std::max(a, c);
      const double lo = std::min(a, c);
      next[k] = (hi == -std::numeric_limits<double>::infinity())
                    ? hi
                    : hi + std::log1p(std::exp(lo - hi)) - log_m;
    }
    log_frac.swap(next);
  }

  const double deck = std::ldexp(1.0, rounds);  // a = 2^h
  double sum = 0.0;
  for (std::size_t r = 1; r <= n; ++r) {
    // n! * P(pi) = prod_{j=1..n} (a - r + j) / a, zero once r > a. The ratio
    // can overflow while the Eulerian weight underflows, so the term
    // weight * |ratio - 1| is assembled in log space.
    if (static_cast<double>(r) > deck) {
      sum += std::exp(log_frac[r - 1]);
      continue;
    }
    double log_ratio = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      log_ratio += std::log1p((static_cast<double>(j) - static_cast<double>(r)) / deck);
    }
    if (log_ratio > 0.0) {
      sum += std::exp(log_frac[r - 1] + log_ratio + std::log(-std::expm1(-log_ratio)));
    } else {
      sum += std::exp(log_frac[r - 1]) * -std::expm1(log_ratio);
    }
  }

  ShufflingErrorReport report;
  report.epsilon = std::clamp(0.5 * sum, 0.0, 1.0);
  report.method = TvMethod::RisingSequenceFormula;
  report.n = n;
  report.spec = ShufflerSpec{ShuffleAlgorithm::Riffle, rounds};
  return report;
}

ConditionalGapReport check_conditional_gap(const ShufflerSpec& spec, std::size_t n,
                                           std::size_t workers, std::size_t batch_size,
                                           std::size_t t, const EnumerationLimits& limits) {
  StreamSpec stream{Regime::GlobalShuffle, n, workers, batch_size, 1, spec, 0};
  stream.validate();
  const std::size_t T = stream.iterations_per_epoch();
  if (t + 1 >= T) throw InvalidArgument("conditional gap needs t + 1 < T");

  ConditionalGapReport report;
  report.n = n;
  report.workers = workers;
  report.batch_size = batch_size;
  report.t = t;
  report.epsilon = tv_exact(spec, n, limits).epsilon;
  const double bM = static_cast<double>(batch_size * workers);
  report.precondition_threshold = bM / static_cast<double>(n);
  report.precondition_met = report.epsilon <= report.precondition_threshold;
  report.bound = 4.0 * static_cast<double>(n) * report.epsilon /
                 (static_cast<double>(n) - bM * static_cast<double>(t));

  StreamSpec uniform = stream;
  uniform.shuffler = ShufflerSpec{ShuffleAlgorithm::FisherYates, 0};
  const auto u_table = conditional_batch_table(uniform, t, limits);
  const auto v_table = conditional_batch_table(stream, t, limits);

  for (const auto& [history, u_dist] : u_table) {
    const auto v_it = v_table.find(history);
    if (v_it == v_table.end()) continue;  // zero probability under v: conditional undefined
    ++report.histories;
    for (const auto& [tuple, pu] : u_dist.probability) {
      const auto p_it = v_it->second.probability.find(tuple);
      const double pv = p_it == v_it->second.probability.end() ? 0.0 : p_it->second;
      report.max_gap = std::max(report.max_gap, std::abs(pv - pu));
    }
  }
  report.pass = !report.precondition_met || report.max_gap <= report.bound + 1e-12;
  return report;
}

Lemma31Report verify_lemma31(std::size_t n, std::size_t b, std::size_t t,
                             std::span<const double> values, std::uint64_t trials,
                             RandomSource& rng) {
  if (n == 0 || b == 0 || t * b + b > n) throw InvalidArgument("lemma check needs tb + b <= n");
  if (values.size() != n) throw InvalidArgument("need exactly n values");
  if (trials < 2) throw InvalidArgument("need at least two trials");

  double mean = 0.0;
  double scale = 0.0;
  for (double v : values) {
    mean += v;
    scale = std::max(scale, std::abs(v));
  }
  mean /= static_cast<double>(n);

  const std::size_t head = t * b;
  const ShufflerSpec uniform{ShuffleAlgorithm::FisherYates, 0};
  double sum_lhs = 0.0, sum_rhs = 0.0, sum_diff = 0.0, sum_diff_sq = 0.0;
  std::vector<double> permuted(n);
  for (std::uint64_t k = 0; k < trials; ++k) {
    const Permutation sigma = shuffle(uniform, n, rng);
    for (std::size_t p = 0; p < n; ++p) permuted[p] = values[sigma[p]];
    double batch = 0.0;
    for (std::size_t j = 0; j < b; ++j) batch += permuted[head + j];
    const double lhs = mean - batch / static_cast<double>(b);
    double rhs = 0.0;
    if (head > 0) {
      double first = 0.0, rest = 0.0;
      for (std::size_t p = 0; p < head; ++p) first += permuted[p];
      for (std::size_t p = head; p < n; ++p) rest += permuted[p];
      rhs = static_cast<double>(head) / static_cast<double>(n) *
            (first / static_cast<double>(head) - rest / static_cast<double>(n - head));
    }
    sum_lhs += lhs;
    sum_rhs += rhs;
    const double diff = lhs - rhs;
    sum_diff += diff;
    sum_diff_sq += diff * diff;
  }
  const double count = static_cast<double>(trials);
  Lemma31Report report;
  report.n = n;
  report.b = b;
  report.t = t;
  report.trials = trials;
  report.lhs = sum_lhs / count;
  report.rhs = sum_rhs / count;
  const double diff_mean = sum_diff / count;
  const double variance = std::max(0.0, (sum_diff_sq - count * diff_mean * diff_mean) / (count - 1));
  report.standard_error = std::sqrt(variance / count);
  report.pass = std::abs(report.lhs - report.rhs) <=
                4.0 * report.standard_error + 1e-12 * (1.0 + scale);
  return report;
}

// ---------------------------------------------------------------------------

std::string to_string(Theorem theorem) {
  switch (theorem) {
    case Theorem::T3_1: return "T3.1";
    case Theorem::T3_2: return "T3.2";
    case Theorem::T3_3: return "T3.3";
    case Theorem::T4_1: return "T4.1";
    case Theorem::T5_2Convex: return "T5.2-convex";
    case Theorem::T5_2StronglyConvex: return "T5.2-sc";
    case Theorem::T5_2NonConvex: return "T5.2-nonconvex";
    case Theorem::T7_1: return "T7.1";
  }
  return "unknown";
}

Theorem parse_theorem(const std::string& name) {
  for (Theorem t : {Theorem::T3_1, Theorem::T3_2, Theorem::T3_3, Theorem::T4_1,
                    Theorem::T5_2Convex, Theorem::T5_2StronglyConvex, Theorem::T5_2NonConvex,
                    Theorem::T7_1}) {
    if (to_string(t) == name) return t;
  }
  throw InvalidArgument("unknown theorem id '" + name + "'");
}

namespace {

double require(const std::optional<double>& value, const char* name) {
  if (!value) throw InvalidArgument(std::string("rate prediction needs parameter ") + name);
  if (!(*value > 0.0) && std::string(name) != "epsilon") {
    throw InvalidArgument(std::string("rate parameter must be positive: ") + name);
  }
  return *value;
}

RateTerm largest(const std::vector<RateTerm>& terms) {
  return *std::max_element(terms.begin(), terms.end(),
                           [](const RateTerm& a, const RateTerm& b) { return a.value < b.value; });
}

// Sum of terms, tagged with the exponent of its largest member.
RateTerm sum_group(std::string name, const std::vector<RateTerm>& terms) {
  RateTerm out{std::move(name), 0.0, largest(terms).s_exponent};
  for (const auto& t : terms) out.value += t.value;
  return out;
}

RateTerm min_group(const RateTerm& a, const RateTerm& b) {
  RateTerm out = a.value <= b.value ? a : b;
  out.name = "min{" + a.name + ", " + b.name + "}";
  return out;
}

}  // namespace

RatePrediction predict_rate(Theorem theorem, const RateParams& p) {
  RatePrediction out;
  out.theorem = theorem;
  const double n = require(p.n, "n");
  const double S = require(p.epochs, "S");
  const double log_n = std::log(n);
  auto bm = [&] { return require(p.batch_size, "b") * require(p.workers, "M"); };

  auto strongly_convex_core = [&](double floor_factor, double extra_in_min) {
    const double bM = bm();
    const double kappa = require(p.kappa, "kappa");
    const double k2 = kappa * kappa;
    const double Sn = S * n;
    const RateTerm first{"bM/(Sn)", bM / Sn, -1.0};
    std::vector<RateTerm> second_parts{
        {"k^2 (bM)^2 log(Sn)/(Sn)^2", k2 * bM * bM * std::log(Sn) / (Sn * Sn), -2.0},
        {"k^2 bM log(n)/(S n^2)", k2 * bM * log_n / (S * n * n), -1.0}};
    if (extra_in_min > 0.0) {
      second_parts.push_back({"k^2 n eps^2/(S bM)", extra_in_min, -1.0});
    }
    out.terms.push_back(min_group(first, sum_group("(" + second_parts[0].name + " + ...)",
                                                   second_parts)));
    out.terms.push_back(
        {floor_factor == 1.0 ? "log(n)/n" : "M log(n)/n", floor_factor * log_n / n, 0.0});
  };

  switch (theorem) {
    case Theorem::T3_1:
      strongly_convex_core(1.0, 0.0);
      break;
    case Theorem::T4_1:
      strongly_convex_core(require(p.workers, "M"), 0.0);
      break;
    case Theorem::T3_2: {
      const double bM = bm();
      out.terms = {{"1/sqrt(nS)", 1.0 / std::sqrt(n * S), -0.5},
                   {"Mb/(nS)", bM / (n * S), -1.0},
                   {"sqrt(1/n)", std::sqrt(1.0 / n), 0.0}};
      break;
    }
    case Theorem::T3_3: {
      const double rho = require(p.rho, "rho");
      const double gap = p.initial_gap.value_or(1.0);
      out.terms = {{"sqrt(gap rho/(Sn))", std::sqrt(gap * rho / (S * n)), -0.5},
                   {"log(n)/n", log_n / n, 0.0}};
      break;
    }
    case Theorem::T5_2Convex: {
      const double bM = bm();
      const double eps = require(p.epsilon, "epsilon");
      out.terms = {{"1/sqrt(Sn)", 1.0 / std::sqrt(S * n), -0.5},
                   {"bM/(Sn)", bM / (S * n), -1.0},
                   {"sqrt(1/n)", std::sqrt(1.0 / n), 0.0},
                   {"eps ln(n)", eps * log_n, 0.0}};
      break;
    }
    case Theorem::T5_2StronglyConvex: {
      const double bM = bm();
      const double eps = require(p.epsilon, "epsilon");
      const double kappa = require(p.kappa, "kappa");
      strongly_convex_core(1.0, kappa * kappa * n * eps * eps / (S * bM));
      out.terms.push_back({"n eps^2/(bM)", n * eps * eps / bM, 0.0});
      break;
    }
    case Theorem::T5_2NonConvex: {
      const double bM = bm();
      const double eps = require(p.epsilon, "epsilon");
      out.terms = {{"sqrt(1/(Sn))", std::sqrt(1.0 / (S * n)), -0.5},
                   {"log(n)/n", log_n / n, 0.0},
                   {"n eps^2/(bM)", n * eps * eps / bM, 0.0}};
      break;
    }
    case Theorem::T7_1: {
      const double bM = bm();
      const double kappa = require(p.kappa, "kappa");
      const double Sn = S * n;
      const RateTerm first{"bM/(nS)", bM / Sn, -1.0};
      const RateTerm second{"k^2 (bM)^2 log(Sn)/(Sn)^2",
                            kappa * kappa * bM * bM * std::log(Sn) / (Sn * Sn), -2.0};
      out.terms = {min_group(first, second), {"1/(Sn)", 1.0 / Sn, -1.0}};
      break;
    }
  }

  for (const auto& term : out.terms) {
    if (!std::isfinite(term.value) || term.value < 0.0) {
      throw InvalidArgument("rate term '" + term.name + "' is not finite and non-negative");
    }
    out.total += term.value;
  }
  out.dominant = largest(out.terms);
  out.predicted_exponent = out.dominant.s_exponent;
  return out;
}

CorollaryPredicates corollary_predicates(double n, double workers, double batch_size,
                                         double epochs, double kappa, double epsilon) {
  const double bM = workers * batch_size;
  CorollaryPredicates c;
  c.sc_comparable = epochs <= bM * kappa * kappa / n;
  c.sc_linear_speedup = epochs >= bM * std::max(1.0, kappa * kappa / n);
  c.convex_comparable = epochs <= bM / std::sqrt(n);
  c.convex_linear_speedup = epochs > bM / std::sqrt(n);
  c.nonconvex_comparable = epochs < n;
  c.nonconvex_linear_speedup = epochs < n;
  c.local_nonconvex_speedup = epochs < n / workers;
  c.global_shuffle_threshold = std::sqrt(bM) / n;
  c.global_shuffle_sufficient = epsilon <= c.global_shuffle_threshold;
  return c;
}

// ---------------------------------------------------------------------------

std::string to_string(TraceMetric metric) {
  switch (metric) {
    case TraceMetric::FGap: return "f_gap";
    case TraceMetric::GradNormSq: return "grad_norm_sq";
    case TraceMetric::DistSq: return "dist_sq";
  }
  return "unknown";
}

TraceMetric parse_trace_metric(const std::string& name) {
  if (name == "f_gap") return TraceMetric::FGap;
  if (name == "grad_norm_sq") return TraceMetric::GradNormSq;
  if (name == "dist_sq") return TraceMetric::DistSq;
  throw InvalidArgument("unknown metric '" + name + "'");
}

std::optional<double> metric_value(const MetricRecord& record, TraceMetric metric) {
  switch (metric) {
    case TraceMetric::FGap: return record.f_gap;
    case TraceMetric::GradNormSq: return record.grad_norm_sq;
    case TraceMetric::DistSq: return record.dist_sq;
  }
  return std::nullopt;
}

std::optional<double> passes_to_target(const MetricsTrace& trace, TraceMetric metric,
                                       double target) {
  for (const auto& r : trace.records) {
    const auto v = metric_value(r, metric);
    if (v && *v <= target) return r.effective_passes;
  }
  return std::nullopt;
}

std::map<std::size_t, SpeedupEntry> speedup(const std::map<std::size_t, MetricsTrace>& traces,
                                            double target, TraceMetric metric) {
  const auto base_it = traces.find(1);
  if (base_it == traces.end()) throw InvalidArgument("speedup needs a trace for M = 1");
  const auto base = passes_to_target(base_it->second, metric, target);
  std::map<std::size_t, SpeedupEntry> out;
  for (const auto& [workers, trace] : traces) {
    SpeedupEntry entry;
    entry.passes_to_target = passes_to_target(trace, metric, target);
    if (entry.passes_to_target && base) {
      entry.alpha = *entry.passes_to_target / *base;
      entry.speedup = static_cast<double>(workers) / *entry.alpha;
    }
    out.emplace(workers, entry);
  }
  return out;
}

SlopeFit loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("slope fit needs equal-length inputs");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  SlopeFit fit;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) {
      ++fit.excluded;
      continue;
    }
    const double lx = std::log(x[k]);
    const double ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++fit.points;
  }
  if (fit.points < 10) {
    std::ostringstream msg;
    msg << "slope fit needs >= 10 positive points, got " << fit.points;
    throw InvalidArgument(msg.str());
  }
  const double count = static_cast<double>(fit.points);
  const double denom = count * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0)) throw InvalidArgument("slope fit: x values are all equal");
  fit.slope = (count * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / count;
  return fit;
}

SlopeFit rate_exponent(const MetricsTrace& trace, TraceMetric metric, std::size_t first,
                       std::size_t last) {
  last = std::min(last, trace.records.size());
  if (first >= last) throw InvalidArgument("empty slope window");
  std::vector<double> x, y;
  std::size_t missing = 0;
  for (std::size_t k = first; k < last; ++k) {
    const auto v = metric_value(trace.records[k], metric);
    if (!v) {
      ++missing;
      continue;
    }
    x.push_back(trace.records[k].effective_passes);
    y.push_back(*v);
  }
  SlopeFit fit = loglog_slope(x, y);
  fit.excluded += missing;
  return fit;
}

std::vector<double> running_mean_grad_norm_sq(const MetricsTrace& trace) {
  std::vector<double> out;
  out.reserve(trace.records.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    sum += trace.records[k].grad_norm_sq;
    out.push_back(sum / static_cast<double>(k + 1));
  }
  return out;
}

}  // namespace dsgd
