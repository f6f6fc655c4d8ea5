#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dsgd/error.hpp"
#include "dsgd/objectives.hpp"
#include "dsgd/schedule.hpp"

namespace dsgd {

enum class LrKind { StronglyConvexDecay, ConvexSqrtDecay, NonConvexConstant, UserConstant };

std::string to_string(LrKind kind);
// Accepts "strongly-convex-decay", "convex-sqrt-decay", "non-convex-constant",
// "constant".
LrKind parse_lr_kind(const std::string& name);

struct NonConvexParams {
  double rho = 0.0;
  double b_sq = 0.0;
  std::size_t batch_size = 1;
  std::size_t workers = 1;
  std::size_t iterations_per_epoch = 1;
  std::size_t epochs = 1;
  double initial_gap = 0.0;  // F(w_0) - F*, or against a lower bound of F*
  // Evaluate the rate for a single worker (M = 1, T = M T) and multiply it by
  // M, still capped at 1 / (6 rho). The plain formula only grows like sqrt(M)
  // and its log T / T factor penalises small T, which hides the speedup.
  bool scale_with_workers = false;
};

struct LrSchedule {
  LrKind kind = LrKind::UserConstant;
  double mu = 0.0;               // StronglyConvexDecay
  double numerator = 2.0;        // StronglyConvexDecay: eta = numerator / (mu k)
  double lipschitz = 0.0;        // ConvexSqrtDecay
  NonConvexParams non_convex;    // NonConvexConstant
  double eta = 0.0;              // UserConstant, and the held value of NonConvexConstant

  static LrSchedule strongly_convex(double mu, double numerator = 2.0);
  static LrSchedule convex_sqrt(double lipschitz);
  // Evaluates min{ sqrt(2 gap / ((3 rho B^2 / (b M)) (1 + 584 log T / T))) / sqrt(S T),
  //                1 / (6 rho) } once.
  static LrSchedule non_convex_constant(const NonConvexParams& params);
  static LrSchedule constant(double eta);

  // Throws InvalidArgument on non-positive parameters.
  void validate() const;
};

// Learning rate for 1-based epoch s and iteration t with T iterations per epoch.
double lr_at(const LrSchedule& schedule, std::size_t s, std::size_t t, std::size_t T);

struct TrainState {
  ParamVector w;
  ParamVector iterate_sum;
  std::size_t count = 0;
  std::size_t epoch = 1;  // 1-based epoch of the next step
  std::size_t iter = 0;   // iterations completed in the current epoch

  static TrainState start(ParamVector w0);
  // Mean of all iterates produced so far.
  ParamVector averaged() const;
};

// Where a step went non-finite (1-based epoch/iteration/worker; worker 0 means
// the aggregated update).
struct NumericFault {
  std::size_t epoch = 0;
  std::size_t iter = 0;
  std::size_t worker = 0;
};

// w <- w - eta / (M b) * sum_m sum_{i in batch m} grad f_i(w). Per-worker sums
// are formed separately and reduced in worker order 1..M. The accumulator
// includes the new iterate. `iterations_per_epoch` is used to roll the epoch
// counter.
TrainState step(const TrainState& state, std::span<const std::span<const std::size_t>> batches,
                const ObjectiveSpec& objective, const Dataset& data, double eta,
                std::size_t iterations_per_epoch);

struct MetricRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t iter = 0;   // 1-based
  double effective_passes = 0.0;
  double objective = 0.0;
  std::optional<double> f_gap;
  std::optional<double> dist_sq;
  double grad_norm_sq = 0.0;
  double lr = 0.0;
};

struct MetricsSummary {
  MetricRecord last;
  double averaged_objective = 0.0;
  std::optional<double> averaged_f_gap;
  std::optional<double> averaged_dist_sq;
  double averaged_grad_norm_sq = 0.0;
};

struct MetricsTrace {
  std::vector<MetricRecord> records;
  MetricsSummary summary;
  ParamVector final_w;
  ParamVector averaged_w;
};

struct RunOptions {
  std::optional<ReferenceOptimum> reference;
  // Lower bound used for f_gap when no reference is given (e.g. a best-found
  // MLP value). Never reported as w*.
  std::optional<double> f_lower_bound;
};

// Thrown when a run produces non-finite values; carries the trace so far.
class NumericAbort : public NumericError {
 public:
  NumericAbort(const std::string& what, NumericFault fault, MetricsTrace partial)
      : NumericError(what), fault_(fault), partial_(std::move(partial)) {}
  const NumericFault& fault() const { return fault_; }
  const MetricsTrace& partial() const { return partial_; }

 private:
  NumericFault fault_;
  MetricsTrace partial_;
};

// Runs S epochs x T iterations of synchronous SGD over the stream and records
// exact full-dataset metrics after every iteration.
MetricsTrace run(const BatchStream& stream, const ObjectiveSpec& objective, const Dataset& data,
                 const LrSchedule& schedule, ParamVector w0, const RunOptions& options = {});

// CSV with header epoch,iter,effective_passes,f_gap,dist_sq,grad_norm_sq,lr.
void write_trace_csv(std::ostream& out, const MetricsTrace& trace);

}  // namespace dsgd
