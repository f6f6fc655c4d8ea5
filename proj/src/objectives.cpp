#include "dsgd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dsgd/error.hpp"

namespace dsgd {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// 1 / (1 + exp(-x)) without overflow.
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::size_t> mlp_layer_sizes(const MlpParams& p, std::size_t input_dim) {
  std::vector<std::size_t> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), p.hidden.begin(), p.hidden.end());
  sizes.push_back(p.classes);
  return sizes;
}

// Forward and backward pass for one sample of the MLP. Parameters are laid out
// layer by layer as the weight matrix (out x in, row-major) followed by the
// bias vector. Adds the gradient into `grad` and returns the loss (without the
// weight-decay term).
class MlpWorkspace {
 public:
  MlpWorkspace(const MlpParams& params, std::size_t input_dim)
      : params_(params), sizes_(mlp_layer_sizes(params, input_dim)) {
    activations_.resize(sizes_.size());
    deltas_.resize(sizes_.size());
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
      activations_[l].resize(sizes_[l]);
      deltas_[l].resize(sizes_[l]);
    }
  }

  double accumulate(std::span<const double> w, std::span<const double> x, std::size_t label,
                    std::span<double> grad) {
    const std::size_t layers = sizes_.size() - 1;
    std::copy(x.begin(), x.end(), activations_[0].begin());
    std::size_t offset = 0;
    offsets_.clear();
    for (std::size_t l = 0; l < layers; ++l) {
      offsets_.push_back(offset);
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* weights = w.data() + offset;
      const double* bias = weights + in * out;
      auto& next = activations_[l + 1];
      for (std::size_t o = 0; o < out; ++o) {
        double z = bias[o];
        const double* row = weights + o * in;
        for (std::size_t k = 0; k < in; ++k) z += row[k] * activations_[l][k];
        next[o] = (l + 1 == layers) ? z : activate(z);
      }
      offset += in * out + out;
    }

    auto& logits = activations_[layers];
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum_exp = 0.0;
    for (double z : logits) sum_exp += std::exp(z - max_logit);
    const double log_partition = max_logit + std::log(sum_exp);
    const double loss = log_partition - logits[label];

    auto& top = deltas_[layers];
    for (std::size_t c = 0; c < logits.size(); ++c) {
      top[c] = std::exp(logits[c] - log_partition) - (c == label ? 1.0 : 0.0);
    }

    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* weights = w.data() + offsets_[l];
      double* g_weights = grad.data() + offsets_[l];
      double* g_bias = g_weights + in * out;
      const auto& delta = deltas_[l + 1];
      const auto& input = activations_[l];
      for (std::size_t o = 0; o < out; ++o) {
        double* g_row = g_weights + o * in;
        for (std::size_t k = 0; k < in; ++k) g_row[k] += delta[o] * input[k];
        g_bias[o] += delta[o];
      }
      if (l == 0) break;
      auto& below = deltas_[l];
      for (std::size_t k = 0; k < in; ++k) {
        double s = 0.0;
        for (std::size_t o = 0; o < out; ++o) s += weights[o * in + k] * delta[o];
        below[k] = s * activate_derivative(input[k]);
      }
    }
    return loss;
  }

 private:
  double activate(double z) const {
    return params_.activation == Activation::Tanh ? std::tanh(z) : sigmoid(z);
  }
  // Derivative expressed through the activation value a = act(z).
  double activate_derivative(double a) const {
    return params_.activation == Activation::Tanh ? 1.0 - a * a : a * (1.0 - a);
  }

  const MlpParams& params_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<double>> activations_;
  std::vector<std::vector<double>> deltas_;
};

void check_dimension(const ObjectiveSpec& spec, const Dataset& data, std::span<const double> w) {
  const std::size_t d = parameter_dim(spec, data);
  if (w.size() != d) {
    std::ostringstream msg;
    msg << "parameter dimension mismatch: got " << w.size() << ", expected " << d;
    throw InvalidArgument(msg.str());
  }
}

void check_index(const Dataset& data, std::size_t i) {
  if (i >= data.size()) {
    std::ostringstream msg;
    msg << "sample index " << i << " out of range [0, " << data.size() << ")";
    throw InvalidArgument(msg.str());
  }
}

std::size_t class_label(const Dataset& data, std::size_t i, std::size_t classes) {
  const double y = data.labels[i];
  const auto c = static_cast<std::size_t>(y);
  if (y < 0.0 || static_cast<double>(c) != y || c >= classes) {
    throw InvalidArgument("MLP label is not a valid class index");
  }
  return c;
}

}  // namespace

void Dataset::validate() const {
  if (dim == 0) throw InvalidArgument("dataset dimension must be positive");
  if (labels.empty()) throw InvalidArgument("dataset is empty");
  if (features.size() != labels.size() * dim) {
    throw InvalidArgument("feature storage does not match n * dim");
  }
}

ObjectiveSpec ObjectiveSpec::quadratic(std::vector<double> spectrum) {
  if (spectrum.empty()) throw InvalidArgument("quadratic spectrum is empty");
  for (double a : spectrum) {
    if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("quadratic spectrum must be positive");
  }
  ObjectiveSpec spec{QuadraticParams{std::move(spectrum)}, {}};
  const auto& s = std::get<QuadraticParams>(spec.family).spectrum;
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  spec.constants.mu = *lo;
  spec.constants.rho = *hi;
  spec.constants.kappa = *hi / *lo;
  spec.constants.method = "closed form from spectrum";
  return spec;
}

ObjectiveSpec ObjectiveSpec::logistic(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
  ObjectiveSpec spec{LogisticParams{lambda}, {}};
  if (lambda > 0.0) spec.constants.mu = lambda;
  return spec;
}

ObjectiveSpec ObjectiveSpec::mlp(MlpParams params) {
  if (params.classes < 2) throw InvalidArgument("MLP needs at least two classes");
  for (std::size_t h : params.hidden) {
    if (h == 0) throw InvalidArgument("MLP hidden layer of width zero");
  }
  if (!(params.lambda >= 0.0)) throw InvalidArgument("MLP lambda must be >= 0");
  return ObjectiveSpec{std::move(params), {}};
}

std::string ObjectiveSpec::family_name() const {
  return std::visit(Overloaded{[](const QuadraticParams&) { return std::string("quadratic"); },
                               [](const LogisticParams&) { return std::string("logistic"); },
                               [](const MlpParams&) { return std::string("mlp"); }},
                    family);
}

std::size_t parameter_dim(const ObjectiveSpec& spec, const Dataset& data) {
  return std::visit(
      Overloaded{[&](const QuadraticParams& q) {
                   if (q.spectrum.size() != data.dim) {
                     throw InvalidArgument("quadratic spectrum length differs from center dimension");
                   }
                   return data.dim;
                 },
                 [&](const LogisticParams&) { return data.dim; },
                 [&](const MlpParams& p) {
                   const auto sizes = mlp_layer_sizes(p, data.dim);
                   std::size_t total = 0;
                   for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
                     total += sizes[l] * sizes[l + 1] + sizes[l + 1];
                   }
                   return total;
                 }},
      spec.family);
}

double accumulate_batch_gradient(const ObjectiveSpec& spec, const Dataset& data,
                                 std::span<const double> w,
                                 std::span<const std::size_t> indices,
                                 std::span<double> grad_sum) {
  check_dimension(spec, data, w);
  if (grad_sum.size() != w.size()) throw InvalidArgument("gradient buffer has wrong size");
  for (std::size_t i : indices) check_index(data, i);

  return std::visit(
      Overloaded{
          [&](const QuadraticParams& q) {
            double total = 0.0;
            for (std::size_t i : indices) {
              const auto c = data.row(i);
              double f = 0.0;
              for (std::size_t k = 0; k < w.size(); ++k) {
                const double diff = w[k] - c[k];
                f += q.spectrum[k] * diff * diff;
                grad_sum[k] += q.spectrum[k] * diff;
              }
              total += 0.5 * f;
            }
            return total;
          },
          [&](const LogisticParams& p) {
            const double reg = 0.5 * p.lambda * squared_norm(w);
            double total = 0.0;
            for (std::size_t i : indices) {
              const auto x = data.row(i);
              const double y = data.labels[i];
              const double margin = y * dot(w, x);
              total += softplus(-margin) + reg;
              const double coeff = -y * sigmoid(-margin);
              for (std::size_t k = 0; k < w.size(); ++k) {
                grad_sum[k] += coeff * x[k] + p.lambda * w[k];
              }
            }
            return total;
          },
          [&](const MlpParams& p) {
            MlpWorkspace workspace(p, data.dim);
            const double reg = 0.5 * p.lambda * squared_norm(w);
            double total = 0.0;
            for (std::size_t i : indices) {
              total += workspace.accumulate(w, data.row(i), class_label(data, i, p.classes),
                                            grad_sum) +
                       reg;
              if (p.lambda > 0.0) {
                for (std::size_t k = 0; k < w.size(); ++k) grad_sum[k] += p.lambda * w[k];
              }
            }
            return total;
          }},
      spec.family);
}

GradientReport loss_and_grad_single(const ObjectiveSpec& spec, const Dataset& data,
                                    std::span<const double> w, std::size_t i) {
  const std::size_t index[1] = {i};
  return loss_and_grad_batch(spec, data, w, index);
}

GradientReport loss_and_grad_batch(const ObjectiveSpec& spec, const Dataset& data,
                                   std::span<const double> w,
                                   std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("empty index set");
  GradientReport report;
  report.gradient.assign(w.size(), 0.0);
  report.value = accumulate_batch_gradient(spec, data, w, indices, report.gradient);
  return report;
}

GradientReport full_objective(const ObjectiveSpec& spec, const Dataset& data,
                              std::span<const double> w) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  GradientReport report = loss_and_grad_batch(spec, data, w, all);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  report.value *= inv_n;
  for (double& g : report.gradient) g *= inv_n;
  return report;
}

double logistic_smoothness_bound(const Dataset& data, double lambda) {
  const std::size_t d = data.dim;
  const std::size_t n = data.size();
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> next(d);
  double eigen = 0.0;
  for (int iter = 0; iter < 500; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.row(i);
      const double proj = dot(x, v);
      for (std::size_t k = 0; k < d; ++k) next[k] += proj * x[k];
    }
    const double norm = std::sqrt(squared_norm(next));
    if (norm == 0.0) break;
    const double previous = eigen;
    eigen = norm;
    for (std::size_t k = 0; k < d; ++k) v[k] = next[k] / norm;
    if (std::abs(eigen - previous) <= 1e-12 * eigen) break;
  }
  // Power iteration approaches from below; pad slightly so this stays an upper bound.
  return lambda + 1.0001 * eigen / (4.0 * static_cast<double>(n));
}

ObjectiveSpec estimate_constants(const ObjectiveSpec& spec, const Dataset& data,
                                 int sample_count, double radius, RandomSource& rng) {
  if (sample_count < 1) throw InvalidArgument("sample_count must be >= 1");
  if (!(radius > 0.0)) throw InvalidArgument("radius must be positive");
  data.validate();
  const std::size_t d = parameter_dim(spec, data);

  std::vector<ParamVector> points;
  points.emplace_back(d, 0.0);
  for (int s = 0; s < sample_count; ++s) {
    ParamVector p(d);
    double norm = 0.0;
    for (double& x : p) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    const double scale =
        radius * std::pow(rng.uniform01(), 1.0 / static_cast<double>(d)) / (norm > 0 ? norm : 1.0);
    for (double& x : p) x *= scale;
    points.push_back(std::move(p));
  }

  double b_sq = 0.0;
  double g_sq = 0.0;
  for (const auto& w : points) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      b_sq = std::max(b_sq, squared_norm(loss_and_grad_single(spec, data, w, i).gradient));
    }
    g_sq = std::max(g_sq, squared_norm(full_objective(spec, data, w).gradient));
  }

  ObjectiveSpec out = spec;
  auto& c = out.constants;
  c.b_sq = b_sq;
  c.g_sq = g_sq;
  c.lipschitz = std::sqrt(g_sq);
  std::ostringstream method;
  method << "B^2, G^2: max squared gradient norm over origin + " << sample_count
         << " uniform points in ball of radius " << radius << "; L = G";

  if (const auto* q = std::get_if<QuadraticParams>(&spec.family)) {
    const auto [lo, hi] = std::minmax_element(q->spectrum.begin(), q->spectrum.end());
    c.mu = *lo;
    c.rho = *hi;
    method << "; mu, rho exact from spectrum";
  } else if (const auto* l = std::get_if<LogisticParams>(&spec.family)) {
    if (l->lambda > 0.0) c.mu = l->lambda;
    c.rho = logistic_smoothness_bound(data, l->lambda);
    method << "; mu = lambda; rho = lambda + lambda_max(X^T X)/(4n)";
  } else {
    // Secant estimate of the local gradient Lipschitz constant.
    double rho = 0.0;
    const double step = 1e-3 * radius;
    for (const auto& w : points) {
      ParamVector direction(d);
      double norm = 0.0;
      for (double& x : direction) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      ParamVector shifted = w;
      for (std::size_t k = 0; k < d; ++k) shifted[k] += step * direction[k] / norm;
      const auto g1 = full_objective(spec, data, w).gradient;
      const auto g2 = full_objective(spec, data, shifted).gradient;
      double diff = 0.0;
      for (std::size_t k = 0; k < d; ++k) diff += (g1[k] - g2[k]) * (g1[k] - g2[k]);
      rho = std::max(rho, std::sqrt(diff) / step);
    }
    c.rho = rho;
    c.mu.reset();
    method << "; rho = max secant ||grad F(w) - grad F(w')|| / ||w - w'|| at the sample points";
  }
  if (c.mu && c.rho) {
    c.kappa = *c.rho / *c.mu;
  } else {
    c.kappa.reset();
  }
  c.method = method.str();
  return out;
}

ReferenceOptimum solve_reference_optimum(const ObjectiveSpec& spec, const Dataset& data,
                                         double tolerance, int max_iterations) {
  if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  data.validate();
  if (spec.is_mlp()) throw InvalidArgument("no certified optimum exists for the MLP family");

  const std::size_t d = parameter_dim(spec, data);
  ReferenceOptimum result;
  if (spec.is_quadratic()) {
    result.w_star.assign(d, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto c = data.row(i);
      for (std::size_t k = 0; k < d; ++k) result.w_star[k] += c[k];
    }
    for (double& x : result.w_star) x /= static_cast<double>(data.size());
    result.f_star = full_objective(spec, data, result.w_star).value;
    return result;
  }

  const double lambda = std::get<LogisticParams>(spec.family).lambda;
  const double step = 1.0 / logistic_smoothness_bound(data, lambda);
  ParamVector w(d, 0.0);
  for (int iter = 0; iter <= max_iterations; ++iter) {
    const GradientReport full = full_objective(spec, data, w);
    if (std::sqrt(squared_norm(full.gradient)) <= tolerance) {
      result.w_star = std::move(w);
      result.f_star = full.value;
      return result;
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= step * full.gradient[k];
  }
  std::ostringstream msg;
  msg << "reference optimum: gradient norm did not reach " << tolerance << " within "
      << max_iterations << " iterations";
  throw NumericError(msg.str());
}

ParamVector default_initial_point(const ObjectiveSpec& spec, const Dataset& data,
                                  std::uint64_t seed) {
  ParamVector w(parameter_dim(spec, data), 0.0);
  if (spec.is_mlp()) {
    RandomSource rng(seed);
    for (double& x : w) x = 0.1 * rng.normal();
  }
  return w;
}

}  // namespace dsgd
