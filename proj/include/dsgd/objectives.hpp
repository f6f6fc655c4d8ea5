#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dsgd/random.hpp"

namespace dsgd {

using ParamVector = std::vector<double>;

// n labelled instances stored row-major. For the quadratic family the rows are
// the per-sample centers and the labels are ignored; logistic labels are +-1;
// MLP labels hold the class index as a double.
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<double> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  // Throws InvalidArgument if the shape is inconsistent.
  void validate() const;
};

struct QuadraticParams {
  // Shared diagonal curvature; one positive entry per parameter coordinate.
  std::vector<double> spectrum;
};

struct LogisticParams {
  double lambda = 0.0;
};

enum class Activation { Tanh, Sigmoid };

struct MlpParams {
  std::vector<std::size_t> hidden{16, 8};
  std::size_t classes = 3;
  Activation activation = Activation::Tanh;
  double lambda = 0.0;
};

// Known or estimated constants of the objective. Unavailable ones are empty.
struct ObjectiveConstants {
  std::optional<double> mu;        // strong convexity
  std::optional<double> rho;       // smoothness
  std::optional<double> kappa;     // rho / mu
  std::optional<double> lipschitz; // L, Lipschitz bound of F
  std::optional<double> b_sq;      // B^2, bound on per-sample squared gradient norm
  std::optional<double> g_sq;      // G^2, bound on full squared gradient norm
  std::string method;              // how the values were obtained
};

using FamilyParams = std::variant<QuadraticParams, LogisticParams, MlpParams>;

struct ObjectiveSpec {
  FamilyParams family;
  ObjectiveConstants constants;

  static ObjectiveSpec quadratic(std::vector<double> spectrum);
  static ObjectiveSpec logistic(double lambda);
  static ObjectiveSpec mlp(MlpParams params);

  bool is_quadratic() const { return std::holds_alternative<QuadraticParams>(family); }
  bool is_logistic() const { return std::holds_alternative<LogisticParams>(family); }
  bool is_mlp() const { return std::holds_alternative<MlpParams>(family); }
  std::string family_name() const;
};

struct GradientReport {
  double value = 0.0;
  ParamVector gradient;
};

// Number of parameters the spec needs for data of the given input dimension.
std::size_t parameter_dim(const ObjectiveSpec& spec, const Dataset& data);

// f_i(w) and its gradient. The full regularizer is part of every per-sample
// loss, so averaging over i reproduces F.
GradientReport loss_and_grad_single(const ObjectiveSpec& spec, const Dataset& data,
                                    std::span<const double> w, std::size_t i);

// Sum (not mean) of f_i and grad f_i over the index set.
GradientReport loss_and_grad_batch(const ObjectiveSpec& spec, const Dataset& data,
                                   std::span<const double> w,
                                   std::span<const std::size_t> indices);

// Accumulates the batch sum into `grad_sum` (which must already be sized) and
// returns the summed loss. Used by the engine to avoid per-call allocation.
double accumulate_batch_gradient(const ObjectiveSpec& spec, const Dataset& data,
                                 std::span<const double> w,
                                 std::span<const std::size_t> indices,
                                 std::span<double> grad_sum);

// F(w) and grad F(w), both means over the whole dataset.
GradientReport full_objective(const ObjectiveSpec& spec, const Dataset& data,
                              std::span<const double> w);

// Fills in mu/rho/kappa/L/B^2/G^2. B^2 and G^2 are maxima of squared gradient
// norms over the origin plus `sample_count` points drawn uniformly from the
// ball of the given radius, so they are lower bounds of the true suprema.
ObjectiveSpec estimate_constants(const ObjectiveSpec& spec, const Dataset& data,
                                 int sample_count, double radius, RandomSource& rng);

struct ReferenceOptimum {
  ParamVector w_star;
  double f_star = 0.0;
};

// Quadratic: closed form (mean of the centers). Logistic: full gradient
// descent until ||grad F|| <= tolerance. MLP is rejected.
ReferenceOptimum solve_reference_optimum(const ObjectiveSpec& spec, const Dataset& data,
                                         double tolerance = 1e-10,
                                         int max_iterations = 1000000);

// Upper bound on the smoothness of the logistic objective:
// lambda + lambda_max(X^T X) / (4 n), with the eigenvalue from power iteration.
double logistic_smoothness_bound(const Dataset& data, double lambda);

// Default initial point: zeros for the convex families, N(0, 0.1^2) entries
// from `seed` for the MLP.
ParamVector default_initial_point(const ObjectiveSpec& spec, const Dataset& data,
                                  std::uint64_t seed);

}  // namespace dsgd
