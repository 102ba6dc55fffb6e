#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "syminv/network.hpp"

namespace syminv {

/// A named view of one trainable tensor, used to walk parameters and
/// gradients in a fixed order: W1..Wd, theta, then per-layer bn scale/shift.
struct TensorView {
  std::string name;
  std::span<double> values;
};
struct ConstTensorView {
  std::string name;
  std::span<const double> values;
};

std::vector<TensorView> trainable_tensors(NetworkParams& params);
std::vector<ConstTensorView> gradient_tensors(const Gradients& grads);
std::vector<TensorView> gradient_tensors(Gradients& grads);

/// Smallest distance of the evaluation point to a non-differentiable set:
/// min over |ReLU input| and, for pooling pairs with a positive winner, the
/// gap between the two entries.
double kink_distance(const ForwardCache& cache);

struct GradcheckOptions {
  double step = 1e-5;
  std::size_t coords_per_tensor = 50;
  std::uint64_t seed = 0;
};

struct TensorCheck {
  std::string name;
  std::size_t coords = 0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::vector<TensorCheck> tensors;
};

/// Compares `analytic` against central differences of the train-mode mean
/// loss on randomly chosen coordinates (all of them when a tensor is smaller
/// than coords_per_tensor). Per-coordinate error is
/// |g - g_fd| / max(|g|, |g_fd|, 1e-8).
GradcheckReport gradcheck(const NetworkParams& params, const ArchConfig& config,
                          const Matrix& inputs, std::span<const int> labels,
                          const Gradients& analytic, const GradcheckOptions& options = {});

/// Same, checking the gradients produced by backward().
GradcheckReport gradcheck(const NetworkParams& params, const ArchConfig& config,
                          const Matrix& inputs, std::span<const int> labels,
                          const GradcheckOptions& options = {});

struct SamplePoint {
  NetworkParams params;
  Matrix inputs;
  std::vector<int> labels;
  std::size_t attempts = 0;
};

/// Random parameters (plus random batch-norm scale/shift for Arch2) and a
/// Gaussian batch, resampled until kink_distance exceeds `margin`.
/// Throws std::runtime_error after `max_attempts`.
SamplePoint sample_kink_free_point(const ArchConfig& config, std::size_t batch_size,
                                   std::uint64_t seed, double margin,
                                   std::size_t max_attempts = 10000);

}  // namespace syminv
