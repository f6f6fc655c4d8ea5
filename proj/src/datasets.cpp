#include "dsgd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsgd/error.hpp"

namespace dsgd {

std::string to_string(DataOrder order) {
  return order == DataOrder::Random ? "random" : "sorted";
}

DataOrder parse_data_order(const std::string& name) {
  if (name == "random") return DataOrder::Random;
  if (name == "sorted") return DataOrder::Sorted;
  throw InvalidArgument("unknown data order '" + name + "'");
}

namespace {

void check_shape(std::size_t n, std::size_t dim) {
  if (n == 0 || dim == 0) throw InvalidArgument("dataset needs n >= 1 and dim >= 1");
}

// Stable reorder of the rows by ascending key.
Dataset reorder(const Dataset& data, const std::vector<double>& key) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  Dataset out;
  out.dim = data.dim;
  out.features.reserve(data.features.size());
  out.labels.reserve(data.labels.size());
  for (std::size_t i : order) {
    const auto row = data.row(i);
    out.features.insert(out.features.end(), row.begin(), row.end());
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

}  // namespace

Dataset quadratic_centers(std::size_t n, std::size_t dim, std::uint64_t seed, double spread,
                          DataOrder order) {
  check_shape(n, dim);
  RandomSource rng(seed);
  Dataset data;
  data.dim = dim;
  data.features.resize(n * dim);
  for (double& x : data.features) x = spread * rng.normal();
  data.labels.assign(n, 0.0);
  if (order == DataOrder::Sorted) {
    std::vector<double> key(n);
    for (std::size_t i = 0; i < n; ++i) key[i] = data.row(i)[0];
    return reorder(data, key);
  }
  return data;
}

Dataset synthetic_logistic(std::size_t n, std::size_t dim, std::uint64_t seed, double scale,
                           double label_noise, DataOrder order) {
  check_shape(n, dim);
  RandomSource rng(seed);
  std::vector<double> truth(dim);
  for (double& x : truth) x = rng.normal();
  Dataset data;
  data.dim = dim;
  data.features.resize(n * dim);
  data.labels.resize(n);
  const double sd = scale / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    double margin = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double x = sd * rng.normal();
      data.features[i * dim + k] = x;
      margin += x * truth[k];
    }
    double y = margin >= 0.0 ? 1.0 : -1.0;
    if (rng.uniform01() < label_noise) y = -y;
    data.labels[i] = y;
  }
  if (order == DataOrder::Sorted) return reorder(data, data.labels);
  return data;
}

Dataset gaussian_blobs(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed,
                       double separation, DataOrder order) {
  check_shape(n, dim);
  if (classes < 2) throw InvalidArgument("blobs need at least two classes");
  RandomSource rng(seed);
  const double unit = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> centers(classes * dim);
  for (double& c : centers) c = separation * unit * rng.normal();
  Dataset data;
  data.dim = dim;
  data.features.resize(n * dim);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    data.labels[i] = static_cast<double>(c);
    for (std::size_t k = 0; k < dim; ++k) {
      data.features[i * dim + k] = centers[c * dim + k] + unit * rng.normal();
    }
  }
  if (order == DataOrder::Sorted) return reorder(data, data.labels);
  return data;
}

std::vector<double> geometric_spectrum(std::size_t dim, double mu, double rho) {
  if (dim == 0 || !(mu > 0.0) || !(rho >= mu)) {
    throw InvalidArgument("spectrum needs dim >= 1 and 0 < mu <= rho");
  }
  std::vector<double> out(dim);
  if (dim == 1) {
    out[0] = mu;
    return out;
  }
  for (std::size_t k = 0; k < dim; ++k) {
    out[k] = mu * std::pow(rho / mu, static_cast<double>(k) / static_cast<double>(dim - 1));
  }
  out.front() = mu;
  out.back() = rho;
  return out;
}

}  // namespace dsgd
