#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "syminv/matrix.hpp"

namespace syminv {

enum class Mode { train, eval };

/// Shape and batch-norm settings for a stack of
/// linear -> [batch-norm] -> ReLU -> 2x1 max-pool layers followed by a
/// softmax classifier. `use_batchnorm == false` is Arch1, `true` is Arch2.
struct ArchConfig {
  std::size_t depth = 2;
  std::size_t filters = 64;
  bool use_batchnorm = false;
  std::size_t input_dim = 784;
  std::size_t n_classes = 10;
  double bn_epsilon = 1e-5;  // 0 is allowed; a constant feature then throws
  double bn_momentum = 0.1;

  void validate() const;
  std::size_t pooled_dim() const noexcept { return filters / 2; }
  /// Column count of the weight matrix of layer `l` (0-based).
  std::size_t layer_input_dim(std::size_t l) const noexcept {
    return l == 0 ? input_dim : pooled_dim();
  }
};

/// Trainable state. Layer `l` has weights[l] of shape filters x layer_input_dim(l);
/// theta is n_classes x filters/2. The bn_* vectors are empty for Arch1.
struct NetworkParams {
  std::vector<Matrix> weights;
  Matrix theta;
  std::vector<Vector> bn_scale;
  std::vector<Vector> bn_shift;
  std::vector<Vector> bn_run_mean;
  std::vector<Vector> bn_run_var;

  bool operator==(const NetworkParams&) const = default;
};

/// Same layout as the trainable part of NetworkParams.
struct Gradients {
  std::vector<Matrix> weights;
  Matrix theta;
  std::vector<Vector> bn_scale;
  std::vector<Vector> bn_shift;

  static Gradients zeros_like(const NetworkParams& params);
};

struct PoolResult {
  Matrix pooled;
  /// One entry per (sample, pair): 0 when the first element of the pair won
  /// (including ties), 1 otherwise.
  std::vector<std::uint8_t> argmax;
};

struct BatchNormCache {
  Matrix xhat;
  Vector mean;
  Vector var;
  Vector inv_std;
};

struct BatchNormOutput {
  Matrix out;
  BatchNormCache cache;  // populated in train mode only
};

struct LayerCache {
  Matrix input;
  Matrix h;
  BatchNormCache bn;
  Matrix pre_activation;  // h for Arch1, the batch-norm output for Arch2
  Matrix relu;
  PoolResult pool;
};

struct ForwardCache {
  Mode mode = Mode::train;
  std::vector<LayerCache> layers;
  Matrix scores;
  Matrix probs;
};

struct ForwardResult {
  double loss = 0.0;
  Matrix probs;
  ForwardCache cache;
};

struct SoftmaxResult {
  double loss = 0.0;
  Matrix probs;
};

/// Gaussian weights with every filter and every class vector unit-normalised.
/// Batch-norm scale 1, shift 0, running mean 0, running variance 1.
NetworkParams init_params(const ArchConfig& config, std::uint64_t seed);
void check_shapes(const NetworkParams& params, const ArchConfig& config);

Matrix relu_forward(const Matrix& h);
PoolResult maxpool_forward(const Matrix& r);
Matrix maxpool_backward(const Matrix& d_pooled, const PoolResult& pool);

/// Train mode normalises with the mini-batch mean and biased variance and
/// requires at least two rows. Eval mode uses the running statistics.
BatchNormOutput batchnorm_forward(const Matrix& h, std::span<const double> scale,
                                  std::span<const double> shift, Mode mode,
                                  std::span<const double> run_mean,
                                  std::span<const double> run_var, double epsilon);

struct BatchNormGrads {
  Matrix dh;
  Vector dscale;
  Vector dshift;
};
BatchNormGrads batchnorm_backward(const Matrix& d_out, const BatchNormCache& cache,
                                  std::span<const double> scale);

/// Max-subtracted softmax and mean cross-entropy over the rows.
SoftmaxResult softmax_xent(const Matrix& scores, std::span<const int> labels);

ForwardResult forward(const NetworkParams& params, const ArchConfig& config, const Matrix& inputs,
                      std::span<const int> labels, Mode mode);

/// Gradients of the mean loss of the batch that produced `cache` (train mode).
Gradients backward(const NetworkParams& params, const ArchConfig& config,
                   const ForwardCache& cache, std::span<const int> labels);

/// Folds the mini-batch statistics of a train-mode forward pass into the
/// running statistics: run = (1 - momentum) * run + momentum * batch, with
/// the unbiased batch variance.
void update_running_stats(NetworkParams& params, const ArchConfig& config,
                          const ForwardCache& cache);

struct Evaluation {
  double mean_loss = 0.0;
  double error_rate = 0.0;
};

/// Eval-mode loss and misclassification rate, processed in chunks.
Evaluation evaluate(const NetworkParams& params, const ArchConfig& config, const Matrix& inputs,
                    std::span<const int> labels, std::size_t chunk = 1000);

std::size_t count_errors(const Matrix& probs, std::span<const int> labels);

}  // namespace syminv
