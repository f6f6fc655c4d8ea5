#include "dsgd/engine.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dsgd {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

std::string fault_message(const std::string& what, const NumericFault& f) {
  std::ostringstream msg;
  msg << what << " at epoch " << f.epoch << ", iteration " << f.iter;
  if (f.worker > 0) msg << ", worker " << f.worker;
  return msg.str();
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string to_string(LrKind kind) {
  switch (kind) {
    case LrKind::StronglyConvexDecay: return "strongly-convex-decay";
    case LrKind::ConvexSqrtDecay: return "convex-sqrt-decay";
    case LrKind::NonConvexConstant: return "non-convex-constant";
    case LrKind::UserConstant: return "constant";
  }
  return "unknown";
}

LrKind parse_lr_kind(const std::string& name) {
  if (name == "strongly-convex-decay") return LrKind::StronglyConvexDecay;
  if (name == "convex-sqrt-decay") return LrKind::ConvexSqrtDecay;
  if (name == "non-convex-constant") return LrKind::NonConvexConstant;
  if (name == "constant") return LrKind::UserConstant;
  throw InvalidArgument("unknown learning-rate schedule '" + name + "'");
}

LrSchedule LrSchedule::strongly_convex(double mu, double numerator) {
  LrSchedule s;
  s.kind = LrKind::StronglyConvexDecay;
  s.mu = mu;
  s.numerator = numerator;
  s.validate();
  return s;
}

LrSchedule LrSchedule::convex_sqrt(double lipschitz) {
  LrSchedule s;
  s.kind = LrKind::ConvexSqrtDecay;
  s.lipschitz = lipschitz;
  s.validate();
  return s;
}

LrSchedule LrSchedule::non_convex_constant(const NonConvexParams& p) {
  if (!(p.rho > 0.0) || !(p.b_sq > 0.0) || p.batch_size == 0 || p.workers == 0 ||
      p.iterations_per_epoch == 0 || p.epochs == 0 || !(p.initial_gap >= 0.0)) {
    throw InvalidArgument("non-convex schedule needs positive rho, B^2, b, M, T, S and gap >= 0");
  }
  const std::size_t workers = p.scale_with_workers ? 1 : p.workers;
  const double T = static_cast<double>(p.iterations_per_epoch * (p.workers / workers));
  const double ST = static_cast<double>(p.epochs) * T;
  const double bM = static_cast<double>(p.batch_size * workers);
  const double noise = (3.0 * p.rho * p.b_sq / bM) * (1.0 + 584.0 * std::log(T) / T);
  double balanced = std::sqrt(2.0 * p.initial_gap / noise) / std::sqrt(ST);
  if (p.scale_with_workers) balanced *= static_cast<double>(p.workers);
  const double cap = 1.0 / (6.0 * p.rho);
  LrSchedule s;
  s.kind = LrKind::NonConvexConstant;
  s.non_convex = p;
  // A zero gap would give eta = 0; fall back to the stability cap.
  s.eta = balanced > 0.0 ? std::min(balanced, cap) : cap;
  s.validate();
  return s;
}

LrSchedule LrSchedule::constant(double eta) {
  LrSchedule s;
  s.kind = LrKind::UserConstant;
  s.eta = eta;
  s.validate();
  return s;
}

void LrSchedule::validate() const {
  switch (kind) {
    case LrKind::StronglyConvexDecay:
      if (!(mu > 0.0) || !(numerator > 0.0)) throw InvalidArgument("schedule needs mu > 0");
      break;
    case LrKind::ConvexSqrtDecay:
      if (!(lipschitz > 0.0)) throw InvalidArgument("schedule needs L > 0");
      break;
    case LrKind::NonConvexConstant:
      if (!(eta > 0.0) || eta > 1.0 / (6.0 * non_convex.rho) * (1.0 + 1e-12)) {
        throw InvalidArgument("non-convex eta must lie in (0, 1/(6 rho)]");
      }
      break;
    case LrKind::UserConstant:
      if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("schedule needs eta > 0");
      break;
  }
}

double lr_at(const LrSchedule& schedule, std::size_t s, std::size_t t, std::size_t T) {
  if (s < 1 || t < 1 || t > T) throw InvalidArgument("lr_at needs s >= 1 and 1 <= t <= T");
  const double k = static_cast<double>((s - 1) * T + t);
  switch (schedule.kind) {
    case LrKind::StronglyConvexDecay: return schedule.numerator / (schedule.mu * k);
    case LrKind::ConvexSqrtDecay: return std::sqrt(schedule.lipschitz / k);
    case LrKind::NonConvexConstant:
    case LrKind::UserConstant: return schedule.eta;
  }
  return 0.0;
}

TrainState TrainState::start(ParamVector w0) {
  TrainState s;
  s.iterate_sum.assign(w0.size(), 0.0);
  s.w = std::move(w0);
  return s;
}

ParamVector TrainState::averaged() const {
  if (count == 0) return w;
  ParamVector avg = iterate_sum;
  for (double& x : avg) x /= static_cast<double>(count);
  return avg;
}

TrainState step(const TrainState& state, std::span<const std::span<const std::size_t>> batches,
                const ObjectiveSpec& objective, const Dataset& data, double eta,
                std::size_t iterations_per_epoch) {
  if (!(eta > 0.0)) throw InvalidArgument("step needs eta > 0");
  if (batches.empty()) throw InvalidArgument("step needs at least one worker batch");
  const std::size_t b = batches.front().size();
  if (b == 0) throw InvalidArgument("worker batch is empty");
  for (const auto& batch : batches) {
    if (batch.size() != b) throw InvalidArgument("worker batches differ in size");
  }

  const NumericFault where{state.epoch, state.iter + 1, 0};
  const std::size_t d = state.w.size();
  std::vector<ParamVector> worker_sums(batches.size(), ParamVector(d, 0.0));
  for (std::size_t m = 0; m < batches.size(); ++m) {
    accumulate_batch_gradient(objective, data, state.w, batches[m], worker_sums[m]);
    if (!all_finite(worker_sums[m])) {
      NumericFault f = where;
      f.worker = m + 1;
      throw NumericAbort(fault_message("non-finite gradient", f), f, {});
    }
  }

  ParamVector total(d, 0.0);
  for (const auto& sum : worker_sums) {
    for (std::size_t k = 0; k < d; ++k) total[k] += sum[k];
  }

  TrainState next = state;
  const double scale = eta / static_cast<double>(batches.size() * b);
  for (std::size_t k = 0; k < d; ++k) {
    next.w[k] -= scale * total[k];
    next.iterate_sum[k] += next.w[k];
  }
  if (!all_finite(next.w)) throw NumericAbort(fault_message("non-finite iterate", where), where, {});
  ++next.count;
  ++next.iter;
  if (next.iter == iterations_per_epoch) {
    next.iter = 0;
    ++next.epoch;
  }
  return next;
}

MetricsTrace run(const BatchStream& stream, const ObjectiveSpec& objective, const Dataset& data,
                 const LrSchedule& schedule, ParamVector w0, const RunOptions& options) {
  schedule.validate();
  data.validate();
  if (stream.spec().n != data.size()) throw InvalidArgument("stream n differs from dataset size");
  if (w0.size() != parameter_dim(objective, data)) {
    throw InvalidArgument("initial point has wrong dimension");
  }
  if (options.reference && options.reference->w_star.size() != w0.size()) {
    throw InvalidArgument("reference optimum has wrong dimension");
  }

  const std::size_t T = stream.iterations();
  const std::size_t M = stream.workers();
  const std::size_t b = stream.batch_size();
  const double passes_per_iter =
      static_cast<double>(b * M) / static_cast<double>(stream.spec().n);
  std::optional<double> f_ref;
  if (options.reference) {
    f_ref = options.reference->f_star;
  } else if (options.f_lower_bound) {
    f_ref = options.f_lower_bound;
  }

  MetricsTrace trace;
  trace.records.reserve(stream.epochs() * T);
  auto measure = [&](std::span<const double> w, MetricRecord& rec) {
    const GradientReport full = full_objective(objective, data, w);
    rec.objective = full.value;
    rec.grad_norm_sq = squared_norm(full.gradient);
    if (f_ref) rec.f_gap = full.value - *f_ref;
    if (options.reference) {
      double dist = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double diff = w[k] - options.reference->w_star[k];
        dist += diff * diff;
      }
      rec.dist_sq = dist;
    }
    return std::isfinite(full.value) && std::isfinite(rec.grad_norm_sq);
  };

  TrainState state = TrainState::start(std::move(w0));
  std::vector<std::span<const std::size_t>> batches(M);
  for (std::size_t s = 0; s < stream.epochs(); ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) batches[m] = stream.batch(s, t, m);
      const double eta = lr_at(schedule, s + 1, t + 1, T);
      try {
        state = step(state, batches, objective, data, eta, T);
      } catch (const NumericAbort& e) {
        trace.final_w = state.w;
        trace.averaged_w = state.averaged();
        throw NumericAbort(e.what(), e.fault(), std::move(trace));
      }
      MetricRecord rec;
      rec.epoch = s + 1;
      rec.iter = t + 1;
      rec.effective_passes = static_cast<double>(s * T + t + 1) * passes_per_iter;
      rec.lr = eta;
      if (!measure(state.w, rec)) {
        const NumericFault f{s + 1, t + 1, 0};
        trace.final_w = state.w;
        trace.averaged_w = state.averaged();
        throw NumericAbort(fault_message("non-finite objective", f), f, std::move(trace));
      }
      trace.records.push_back(rec);
    }
  }

  trace.final_w = state.w;
  trace.averaged_w = state.averaged();
  trace.summary.last = trace.records.back();
  MetricRecord avg;
  measure(trace.averaged_w, avg);
  trace.summary.averaged_objective = avg.objective;
  trace.summary.averaged_f_gap = avg.f_gap;
  trace.summary.averaged_dist_sq = avg.dist_sq;
  trace.summary.averaged_grad_norm_sq = avg.grad_norm_sq;
  return trace;
}

void write_trace_csv(std::ostream& out, const MetricsTrace& trace) {
  out << "epoch,iter,effective_passes,f_gap,dist_sq,grad_norm_sq,lr\n";
  for (const auto& r : trace.records) {
    out << r.epoch << ',' << r.iter << ',' << format_double(r.effective_passes) << ','
        << (r.f_gap ? format_double(*r.f_gap) : "") << ','
        << (r.dist_sq ? format_double(*r.dist_sq) : "") << ',' << format_double(r.grad_norm_sq)
        << ',' << format_double(r.lr) << '\n';
  }
}

}  // namespace dsgd
