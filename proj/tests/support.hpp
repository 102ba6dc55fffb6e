#pragma once

// Hand-rolled generators for property tests. Every generator is a pure
// function of its seed so failures reproduce from the printed case index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "syminv/matrix.hpp"
#include "syminv/mnist.hpp"
#include "syminv/network.hpp"
#include "syminv/random.hpp"

namespace syminv::testing {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline Vector random_positive(Rng& rng, std::size_t n, double lo = 0.1, double hi = 10.0) {
  Vector v(n);
  for (double& x : v) x = lo * std::pow(hi / lo, rng.uniform());
  return v;
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes = 10) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.index(classes));
  return y;
}

inline ArchConfig small_arch(std::size_t depth, bool bn, std::size_t filters = 4,
                             std::size_t input_dim = 12) {
  ArchConfig a;
  a.depth = depth;
  a.filters = filters;
  a.use_batchnorm = bn;
  a.input_dim = input_dim;
  return a;
}

/// Gaussian-blob classification data: class k is centred on a fixed random
/// point, so a small network separates it within a few epochs.
inline Dataset blob_dataset(std::size_t n, std::size_t dim, std::uint64_t seed,
                            double noise = 0.35, std::size_t classes = 10) {
  Rng centres(0xC0FFEE);
  Matrix mu(classes, dim);
  for (double& v : mu.data()) v = centres.uniform();
  Rng rng(seed);
  Dataset d;
  d.inputs = Matrix(n, dim);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = rng.index(classes);
    d.labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = mu(k, j) + noise * rng.normal();
      d.inputs(i, j) = std::min(1.0, std::max(0.0, v));
    }
  }
  return d;
}

}  // namespace syminv::testing
