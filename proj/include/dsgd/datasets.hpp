#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "dsgd/objectives.hpp"

namespace dsgd {

enum class DataOrder { Random, Sorted };

std::string to_string(DataOrder order);
DataOrder parse_data_order(const std::string& name);

// Centers c_i ~ N(0, spread^2 I) for the quadratic family. Sorted order sorts
// the centers by their first coordinate.
Dataset quadratic_centers(std::size_t n, std::size_t dim, std::uint64_t seed, double spread,
                          DataOrder order = DataOrder::Random);

// Features x ~ N(0, scale^2 / d I) (so ||x|| is close to `scale`), labels
// sign(<w_true, x>) flipped with probability `label_noise`. Sorted order puts
// all -1 labels first.
Dataset synthetic_logistic(std::size_t n, std::size_t dim, std::uint64_t seed, double scale,
                           double label_noise, DataOrder order = DataOrder::Random);

// Balanced Gaussian blobs: class centers ~ N(0, separation^2 / d I), points are
// center + N(0, 1/d I). Sorted order groups the samples by class.
Dataset gaussian_blobs(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed,
                       double separation, DataOrder order = DataOrder::Random);

// Geometric spectrum of `dim` values from mu to rho (inclusive).
std::vector<double> geometric_spectrum(std::size_t dim, double mu, double rho);

}  // namespace dsgd
