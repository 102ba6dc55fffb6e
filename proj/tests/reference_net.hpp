#pragma once

// Straight-loop train-mode forward pass in an arbitrary floating type. Used as
// an independent oracle for the library forward pass and, in extended
// precision, for finite differences below the float64 noise floor.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "syminv/gradcheck.hpp"
#include "syminv/network.hpp"

#ifdef SYMINV_HAVE_QUAD
#include <quadmath.h>
#endif

namespace syminv::testing {

template <typename T>
struct RefMath {
  static T exp(T x) { return std::exp(x); }
  static T log(T x) { return std::log(x); }
  static T sqrt(T x) { return std::sqrt(x); }
};

#ifdef SYMINV_HAVE_QUAD
template <>
struct RefMath<__float128> {
  static __float128 exp(__float128 x) { return expq(x); }
  static __float128 log(__float128 x) { return logq(x); }
  static __float128 sqrt(__float128 x) { return sqrtq(x); }
};
#endif

/// Parameters held as flat tensors in trainable_tensors order, so a single
/// coordinate can be perturbed in T without rounding to double.
template <typename T>
struct RefParams {
  std::vector<std::vector<T>> tensors;

  explicit RefParams(const NetworkParams& p) {
    NetworkParams copy = p;
    for (const auto& t : trainable_tensors(copy)) tensors.emplace_back(t.values.begin(), t.values.end());
  }
};

template <typename T>
T reference_loss(const RefParams<T>& rp, const ArchConfig& a, const Matrix& inputs,
                 std::span<const int> labels) {
  using M = RefMath<T>;
  const std::size_t n = inputs.rows(), f = a.filters, half = f / 2;
  std::vector<std::vector<T>> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i].assign(inputs.row(i).begin(), inputs.row(i).end());
  std::size_t in = a.input_dim;
  for (std::size_t l = 0; l < a.depth; ++l) {
    const auto& w = rp.tensors[l];
    std::vector<std::vector<T>> h(n, std::vector<T>(f, T(0)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < f; ++k)
        for (std::size_t j = 0; j < in; ++j) h[i][k] += w[k * in + j] * x[i][j];
    if (a.use_batchnorm) {
      const auto& scale = rp.tensors[a.depth + 1 + 2 * l];
      const auto& shift = rp.tensors[a.depth + 2 + 2 * l];
      for (std::size_t k = 0; k < f; ++k) {
        T mu(0), var(0);
        for (std::size_t i = 0; i < n; ++i) mu += h[i][k];
        mu /= T(n);
        for (std::size_t i = 0; i < n; ++i) var += (h[i][k] - mu) * (h[i][k] - mu);
        var /= T(n);
        const T s = M::sqrt(var + T(a.bn_epsilon));
        for (std::size_t i = 0; i < n; ++i) h[i][k] = scale[k] * (h[i][k] - mu) / s + shift[k];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<T> m(half);
      for (std::size_t k = 0; k < half; ++k) {
        const T p = h[i][2 * k] > T(0) ? h[i][2 * k] : T(0);
        const T q = h[i][2 * k + 1] > T(0) ? h[i][2 * k + 1] : T(0);
        m[k] = q > p ? q : p;
      }
      x[i] = std::move(m);
    }
    in = half;
  }
  const auto& theta = rp.tensors[a.depth];
  T total(0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<T> s(a.n_classes, T(0));
    for (std::size_t c = 0; c < a.n_classes; ++c)
      for (std::size_t j = 0; j < half; ++j) s[c] += theta[c * half + j] * x[i][j];
    T mx = s[0];
    for (const T& v : s) mx = v > mx ? v : mx;
    T z(0);
    for (const T& v : s) z += M::exp(v - mx);
    total += M::log(z) + mx - s[static_cast<std::size_t>(labels[i])];
  }
  return total / T(n);
}

}  // namespace syminv::testing
