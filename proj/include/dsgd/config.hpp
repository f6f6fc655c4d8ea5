#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsgd/analysis.hpp"
#include "dsgd/datasets.hpp"
#include "dsgd/engine.hpp"
#include "dsgd/schedule.hpp"

namespace dsgd {

// Experiment configuration. The JSON schema is documented in the README; every
// field below maps to one key of the same name. Missing keys take the defaults
// shown here, unknown keys are rejected.

struct ObjectiveConfig {
  std::string family = "quadratic";  // quadratic | logistic | mlp
  // quadratic: geometric spectrum from mu to kappa * mu over the data dimension
  double mu = 1.0;
  double kappa = 10.0;
  // logistic: L2 weight, 1 / sqrt(n) when absent
  std::optional<double> lambda;
  // mlp
  std::vector<std::size_t> hidden{16, 8};
  std::string activation = "tanh";  // tanh | sigmoid
  double weight_decay = 0.0;

  bool operator==(const ObjectiveConfig&) const = default;
};

struct DataConfig {
  // quadratic-centers | synthetic-logistic | synthetic-gaussian-blobs
  std::string generator = "quadratic-centers";
  std::size_t n = 2000;
  std::size_t dim = 20;
  std::uint64_t seed = 1;
  DataOrder order = DataOrder::Random;
  double spread = 1.0;        // quadratic-centers
  double scale = 1.0;         // synthetic-logistic
  double label_noise = 0.05;  // synthetic-logistic
  double separation = 1.0;    // synthetic-gaussian-blobs
  std::size_t classes = 3;    // synthetic-gaussian-blobs

  bool operator==(const DataConfig&) const = default;
};

struct StreamConfig {
  Regime regime = Regime::GlobalShuffle;
  std::size_t workers = 1;
  std::size_t batch_size = 5;
  std::size_t epochs = 10;
  ShuffleAlgorithm shuffler = ShuffleAlgorithm::FisherYates;
  int rounds = 0;
  std::uint64_t seed = 1;

  bool operator==(const StreamConfig&) const = default;
};

struct ScheduleConfig {
  LrKind kind = LrKind::StronglyConvexDecay;
  double numerator = 2.0;            // strongly-convex-decay
  std::optional<double> mu;          // overrides the objective's mu
  std::optional<double> lipschitz;   // overrides the estimated L
  std::optional<double> eta;         // constant
  bool scale_with_workers = false;   // non-convex-constant

  bool operator==(const ScheduleConfig&) const = default;
};

struct ConstantsConfig {
  int samples = 20;
  double radius = 1.0;
  std::uint64_t seed = 5;

  bool operator==(const ConstantsConfig&) const = default;
};

struct TargetConfig {
  TraceMetric metric = TraceMetric::FGap;
  std::optional<double> value;
  // Sweeps only: take the target from the smallest-M cell of each group, as
  // its metric at the end of this (1-based) epoch.
  std::optional<std::size_t> reference_epoch;

  bool operator==(const TargetConfig&) const = default;
};

struct SweepConfig {
  std::vector<std::size_t> workers;
  std::vector<std::size_t> epochs;
  std::vector<Regime> regimes;
  std::vector<int> rounds;
  // Replicate indices; replicate r runs with stream seed derive_seed(seed, r).
  std::vector<std::uint64_t> replicates;
  std::size_t parallelism = 1;

  bool operator==(const SweepConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ObjectiveConfig objective;
  DataConfig data;
  StreamConfig stream;
  ScheduleConfig schedule;
  ConstantsConfig constants;
  TargetConfig target;
  SweepConfig sweep;
  std::uint64_t init_seed = 11;
  // Used as F* for f_gap when there is no certified optimum (MLP).
  double f_lower_bound = 0.0;
  std::string output_dir = "runs/experiment";

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws ConfigError with a "line L: ..." or "<path>: ..." diagnostic.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

// Semantic checks, including divisibility of n by M b for every swept M.
// Throws ConfigError.
void validate_config(const ExperimentConfig& config);

}  // namespace dsgd
