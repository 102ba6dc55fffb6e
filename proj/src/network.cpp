#include "syminv/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "syminv/random.hpp"

namespace syminv {
namespace {

Matrix gaussian_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return orth_rows(m);
}

void require_labels(std::span<const int> labels, std::size_t rows, std::size_t n_classes) {
  if (labels.size() != rows) {
    throw DimensionError("expected " + std::to_string(rows) + " labels, got " +
                         std::to_string(labels.size()));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes) {
      throw std::invalid_argument("label " + std::to_string(l) + " outside 0.." +
                                  std::to_string(n_classes - 1));
    }
  }
}

}  // namespace

void ArchConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("ArchConfig: depth must be >= 1");
  if (filters == 0 || filters % 2 != 0) {
    throw std::invalid_argument("ArchConfig: filters_per_layer must be a positive even number, got " +
                                std::to_string(filters));
  }
  if (input_dim == 0 || n_classes < 2) throw std::invalid_argument("ArchConfig: bad input/class count");
  if (use_batchnorm) {
    if (!(bn_epsilon >= 0.0)) throw std::invalid_argument("ArchConfig: bn_epsilon must be non-negative");
    if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) {
      throw std::invalid_argument("ArchConfig: bn_momentum must lie in (0,1)");
    }
  }
}

Gradients Gradients::zeros_like(const NetworkParams& params) {
  Gradients g;
  for (const auto& w : params.weights) g.weights.emplace_back(w.rows(), w.cols());
  g.theta = Matrix(params.theta.rows(), params.theta.cols());
  for (const auto& s : params.bn_scale) g.bn_scale.emplace_back(s.size(), 0.0);
  for (const auto& s : params.bn_shift) g.bn_shift.emplace_back(s.size(), 0.0);
  return g;
}

NetworkParams init_params(const ArchConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  NetworkParams p;
  for (std::size_t l = 0; l < config.depth; ++l) {
    p.weights.push_back(gaussian_unit_rows(config.filters, config.layer_input_dim(l), rng));
  }
  p.theta = gaussian_unit_rows(config.n_classes, config.pooled_dim(), rng);
  if (config.use_batchnorm) {
    for (std::size_t l = 0; l < config.depth; ++l) {
      p.bn_scale.emplace_back(config.filters, 1.0);
      p.bn_shift.emplace_back(config.filters, 0.0);
      p.bn_run_mean.emplace_back(config.filters, 0.0);
      p.bn_run_var.emplace_back(config.filters, 1.0);
    }
  }
  return p;
}

void check_shapes(const NetworkParams& params, const ArchConfig& config) {
  if (params.weights.size() != config.depth) {
    throw DimensionError("network has " + std::to_string(params.weights.size()) +
                         " weight matrices, config depth is " + std::to_string(config.depth));
  }
  for (std::size_t l = 0; l < config.depth; ++l) {
    const auto& w = params.weights[l];
    if (w.rows() != config.filters || w.cols() != config.layer_input_dim(l)) {
      throw DimensionError("layer " + std::to_string(l + 1) + " weights are " + w.shape_string() +
                           ", expected " + std::to_string(config.filters) + "x" +
                           std::to_string(config.layer_input_dim(l)));
    }
  }
  if (params.theta.rows() != config.n_classes || params.theta.cols() != config.pooled_dim()) {
    throw DimensionError("theta is " + params.theta.shape_string() + ", expected " +
                         std::to_string(config.n_classes) + "x" +
                         std::to_string(config.pooled_dim()));
  }
  const std::size_t bn_layers = config.use_batchnorm ? config.depth : 0;
  for (const auto* v : {&params.bn_scale, &params.bn_shift, &params.bn_run_mean, &params.bn_run_var}) {
    if (v->size() != bn_layers) throw DimensionError("batch-norm parameter count does not match config");
    for (const auto& x : *v)
      if (x.size() != config.filters) throw DimensionError("batch-norm vector has wrong length");
  }
}

Matrix relu_forward(const Matrix& h) {
  Matrix r = h;
  for (double& v : r.data()) v = v > 0.0 ? v : 0.0;
  return r;
}

PoolResult maxpool_forward(const Matrix& r) {
  if (r.cols() % 2 != 0) {
    throw DimensionError("maxpool_forward: feature dimension " + std::to_string(r.cols()) +
                         " is odd");
  }
  const std::size_t half = r.cols() / 2;
  PoolResult out{Matrix(r.rows(), half), std::vector<std::uint8_t>(r.rows() * half)};
  for (std::size_t i = 0; i < r.rows(); ++i) {
    const auto in = r.row(i);
    auto m = out.pooled.row(i);
    for (std::size_t k = 0; k < half; ++k) {
      const double a = in[2 * k];
      const double b = in[2 * k + 1];
      const bool second = b > a;
      m[k] = second ? b : a;
      out.argmax[i * half + k] = second ? 1 : 0;
    }
  }
  return out;
}

Matrix maxpool_backward(const Matrix& d_pooled, const PoolResult& pool) {
  require_same_shape(d_pooled, pool.pooled, "maxpool_backward");
  const std::size_t half = d_pooled.cols();
  Matrix d(d_pooled.rows(), 2 * half);
  for (std::size_t i = 0; i < d_pooled.rows(); ++i) {
    const auto g = d_pooled.row(i);
    auto out = d.row(i);
    for (std::size_t k = 0; k < half; ++k) out[2 * k + pool.argmax[i * half + k]] = g[k];
  }
  return d;
}

BatchNormOutput batchnorm_forward(const Matrix& h, std::span<const double> scale,
                                  std::span<const double> shift, Mode mode,
                                  std::span<const double> run_mean,
                                  std::span<const double> run_var, double epsilon) {
  const std::size_t n = h.rows();
  const std::size_t f = h.cols();
  if (scale.size() != f || shift.size() != f) {
    throw DimensionError("batchnorm_forward: scale/shift length does not match " + h.shape_string());
  }
  BatchNormOutput result{Matrix(n, f), {}};
  if (mode == Mode::eval) {
    if (run_mean.size() != f || run_var.size() != f) {
      throw DimensionError("batchnorm_forward: running statistics length mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = h.row(i);
      auto y = result.out.row(i);
      for (std::size_t j = 0; j < f; ++j) {
        y[j] = scale[j] * (x[j] - run_mean[j]) / std::sqrt(run_var[j] + epsilon) + shift[j];
      }
    }
    return result;
  }
  if (n < 2) throw std::invalid_argument("batchnorm_forward: train mode needs a batch of at least 2");

  auto& c = result.cache;
  c.mean.assign(f, 0.0);
  c.var.assign(f, 0.0);
  c.inv_std.assign(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = h.row(i);
    for (std::size_t j = 0; j < f; ++j) c.mean[j] += x[j];
  }
  for (double& m : c.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = h.row(i);
    for (std::size_t j = 0; j < f; ++j) {
      const double d = x[j] - c.mean[j];
      c.var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < f; ++j) {
    c.var[j] /= static_cast<double>(n);
    if (c.var[j] + epsilon == 0.0) {  // NaN passes through to the loss
      throw std::domain_error("batchnorm_forward: feature " + std::to_string(j) +
                              " is constant over the batch and epsilon is 0");
    }
    c.inv_std[j] = 1.0 / std::sqrt(c.var[j] + epsilon);
  }
  c.xhat = Matrix(n, f);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = h.row(i);
    auto xh = c.xhat.row(i);
    auto y = result.out.row(i);
    for (std::size_t j = 0; j < f; ++j) {
      xh[j] = (x[j] - c.mean[j]) * c.inv_std[j];
      y[j] = scale[j] * xh[j] + shift[j];
    }
  }
  return result;
}

BatchNormGrads batchnorm_backward(const Matrix& d_out, const BatchNormCache& cache,
                                  std::span<const double> scale) {
  require_same_shape(d_out, cache.xhat, "batchnorm_backward");
  const std::size_t n = d_out.rows();
  const std::size_t f = d_out.cols();
  BatchNormGrads g{Matrix(n, f), Vector(f, 0.0), Vector(f, 0.0)};
  Vector sum_dxhat(f, 0.0);
  Vector sum_dxhat_xhat(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto dy = d_out.row(i);
    const auto xh = cache.xhat.row(i);
    for (std::size_t j = 0; j < f; ++j) {
      g.dscale[j] += dy[j] * xh[j];
      g.dshift[j] += dy[j];
      const double dxhat = dy[j] * scale[j];
      sum_dxhat[j] += dxhat;
      sum_dxhat_xhat[j] += dxhat * xh[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto dy = d_out.row(i);
    const auto xh = cache.xhat.row(i);
    auto dh = g.dh.row(i);
    for (std::size_t j = 0; j < f; ++j) {
      const double dxhat = dy[j] * scale[j];
      dh[j] = cache.inv_std[j] * inv_n *
              (static_cast<double>(n) * dxhat - sum_dxhat[j] - xh[j] * sum_dxhat_xhat[j]);
    }
  }
  return g;
}

SoftmaxResult softmax_xent(const Matrix& scores, std::span<const int> labels) {
  require_labels(labels, scores.rows(), scores.cols());
  SoftmaxResult r{0.0, Matrix(scores.rows(), scores.cols())};
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto s = scores.row(i);
    auto p = r.probs.row(i);
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      p[k] = std::exp(s[k] - mx);
      z += p[k];
    }
    for (double& v : p) v /= z;
    // -log softmax evaluated in log space so saturated rows stay finite
    r.loss += std::log(z) - (s[labels[i]] - mx);
  }
  if (scores.rows() > 0) r.loss /= static_cast<double>(scores.rows());
  return r;
}

ForwardResult forward(const NetworkParams& params, const ArchConfig& config, const Matrix& inputs,
                      std::span<const int> labels, Mode mode) {
  check_shapes(params, config);
  if (inputs.cols() != config.input_dim) {
    throw DimensionError("forward: inputs are " + inputs.shape_string() + ", expected " +
                         std::to_string(config.input_dim) + " columns");
  }
  ForwardResult result;
  result.cache.mode = mode;
  result.cache.layers.resize(config.depth);
  const Matrix* x = &inputs;
  for (std::size_t l = 0; l < config.depth; ++l) {
    auto& lc = result.cache.layers[l];
    lc.input = *x;
    lc.h = matmul_nt(*x, params.weights[l]);
    if (config.use_batchnorm) {
      auto bn = batchnorm_forward(lc.h, params.bn_scale[l], params.bn_shift[l], mode,
                                  params.bn_run_mean[l], params.bn_run_var[l], config.bn_epsilon);
      lc.pre_activation = std::move(bn.out);
      lc.bn = std::move(bn.cache);
    } else {
      lc.pre_activation = lc.h;
    }
    lc.relu = relu_forward(lc.pre_activation);
    lc.pool = maxpool_forward(lc.relu);
    x = &lc.pool.pooled;
  }
  result.cache.scores = matmul_nt(*x, params.theta);
  auto sm = softmax_xent(result.cache.scores, labels);
  result.loss = sm.loss;
  result.cache.probs = sm.probs;
  result.probs = std::move(sm.probs);
  return result;
}

Gradients backward(const NetworkParams& params, const ArchConfig& config,
                   const ForwardCache& cache, std::span<const int> labels) {
  check_shapes(params, config);
  if (cache.layers.size() != config.depth) {
    throw DimensionError("backward: cache has " + std::to_string(cache.layers.size()) +
                         " layers, network has " + std::to_string(config.depth));
  }
  if (cache.mode != Mode::train && config.use_batchnorm) {
    throw std::invalid_argument("backward: batch-norm gradients need a train-mode forward cache");
  }
  const std::size_t n = cache.probs.rows();
  require_labels(labels, n, config.n_classes);
  if (cache.probs.cols() != config.n_classes) {
    throw DimensionError("backward: cache probabilities do not match the class count");
  }

  Gradients g = Gradients::zeros_like(params);
  Matrix d_scores = cache.probs;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = d_scores.row(i);
    r[labels[i]] -= 1.0;
    for (double& v : r) v *= inv_n;
  }
  const auto& last = cache.layers.back().pool.pooled;
  if (last.cols() != params.theta.cols() || last.rows() != n) {
    throw DimensionError("backward: cache does not match parameters");
  }
  g.theta = matmul_tn(d_scores, last);
  Matrix d_pooled = matmul(d_scores, params.theta);

  for (std::size_t li = config.depth; li-- > 0;) {
    const auto& lc = cache.layers[li];
    if (lc.h.cols() != params.weights[li].rows() || lc.input.cols() != params.weights[li].cols()) {
      throw DimensionError("backward: layer " + std::to_string(li + 1) +
                           " cache does not match parameters");
    }
    Matrix d_pre = maxpool_backward(d_pooled, lc.pool);
    {
      auto d = d_pre.data();
      const auto pre = lc.pre_activation.data();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(pre[i] > 0.0)) d[i] = 0.0;
    }
    Matrix d_h;
    if (config.use_batchnorm) {
      auto bg = batchnorm_backward(d_pre, lc.bn, params.bn_scale[li]);
      d_h = std::move(bg.dh);
      g.bn_scale[li] = std::move(bg.dscale);
      g.bn_shift[li] = std::move(bg.dshift);
    } else {
      d_h = std::move(d_pre);
    }
    g.weights[li] = matmul_tn(d_h, lc.input);
    if (li > 0) d_pooled = matmul(d_h, params.weights[li]);
  }
  return g;
}

void update_running_stats(NetworkParams& params, const ArchConfig& config,
                          const ForwardCache& cache) {
  if (!config.use_batchnorm) return;
  if (cache.mode != Mode::train) throw std::invalid_argument("update_running_stats: eval-mode cache");
  const double m = config.bn_momentum;
  for (std::size_t l = 0; l < config.depth; ++l) {
    const auto& bn = cache.layers[l].bn;
    const double n = static_cast<double>(bn.xhat.rows());
    const double unbias = n / (n - 1.0);
    for (std::size_t j = 0; j < config.filters; ++j) {
      params.bn_run_mean[l][j] = (1.0 - m) * params.bn_run_mean[l][j] + m * bn.mean[j];
      params.bn_run_var[l][j] = (1.0 - m) * params.bn_run_var[l][j] + m * bn.var[j] * unbias;
    }
  }
}

std::size_t count_errors(const Matrix& probs, std::span<const int> labels) {
  std::size_t errors = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto p = probs.row(i);
    const auto pred = std::distance(p.begin(), std::max_element(p.begin(), p.end()));
    if (pred != labels[i]) ++errors;
  }
  return errors;
}

Evaluation evaluate(const NetworkParams& params, const ArchConfig& config, const Matrix& inputs,
                    std::span<const int> labels, std::size_t chunk) {
  Evaluation ev;
  const std::size_t n = inputs.rows();
  if (n == 0) return ev;
  double loss_sum = 0.0;
  std::size_t errors = 0;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    Matrix block(end - start, inputs.cols());
    std::copy(inputs.row(start).begin(), inputs.row(start).begin() + (end - start) * inputs.cols(),
              block.data().begin());
    const auto lab = labels.subspan(start, end - start);
    const auto r = forward(params, config, block, lab, Mode::eval);
    loss_sum += r.loss * static_cast<double>(end - start);
    errors += count_errors(r.probs, lab);
  }
  ev.mean_loss = loss_sum / static_cast<double>(n);
  ev.error_rate = static_cast<double>(errors) / static_cast<double>(n);
  return ev;
}

}  // namespace syminv
