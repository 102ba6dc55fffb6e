#include "syminv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "syminv/random.hpp"

namespace syminv {

std::vector<TensorView> trainable_tensors(NetworkParams& params) {
  std::vector<TensorView> out;
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    out.push_back({"W" + std::to_string(l + 1), params.weights[l].data()});
  out.push_back({"theta", params.theta.data()});
  for (std::size_t l = 0; l < params.bn_scale.size(); ++l) {
    out.push_back({"bn_scale" + std::to_string(l + 1), params.bn_scale[l]});
    out.push_back({"bn_shift" + std::to_string(l + 1), params.bn_shift[l]});
  }
  return out;
}

std::vector<TensorView> gradient_tensors(Gradients& grads) {
  std::vector<TensorView> out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l)
    out.push_back({"W" + std::to_string(l + 1), grads.weights[l].data()});
  out.push_back({"theta", grads.theta.data()});
  for (std::size_t l = 0; l < grads.bn_scale.size(); ++l) {
    out.push_back({"bn_scale" + std::to_string(l + 1), grads.bn_scale[l]});
    out.push_back({"bn_shift" + std::to_string(l + 1), grads.bn_shift[l]});
  }
  return out;
}

std::vector<ConstTensorView> gradient_tensors(const Gradients& grads) {
  std::vector<ConstTensorView> out;
  for (std::size_t l = 0; l < grads.weights.size(); ++l)
    out.push_back({"W" + std::to_string(l + 1), grads.weights[l].data()});
  out.push_back({"theta", grads.theta.data()});
  for (std::size_t l = 0; l < grads.bn_scale.size(); ++l) {
    out.push_back({"bn_scale" + std::to_string(l + 1), grads.bn_scale[l]});
    out.push_back({"bn_shift" + std::to_string(l + 1), grads.bn_shift[l]});
  }
  return out;
}

double kink_distance(const ForwardCache& cache) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& lc : cache.layers) {
    for (double v : lc.pre_activation.data()) d = std::min(d, std::abs(v));
    const auto& r = lc.relu;
    for (std::size_t i = 0; i < r.rows(); ++i) {
      const auto row = r.row(i);
      for (std::size_t k = 0; k + 1 < row.size(); k += 2) {
        if (std::max(row[k], row[k + 1]) > 0.0) d = std::min(d, std::abs(row[k] - row[k + 1]));
      }
    }
  }
  return d;
}

GradcheckReport gradcheck(const NetworkParams& params, const ArchConfig& config,
                          const Matrix& inputs, std::span<const int> labels,
                          const Gradients& analytic, const GradcheckOptions& options) {
  NetworkParams probe = params;
  auto tensors = trainable_tensors(probe);
  const auto grads = gradient_tensors(analytic);
  if (grads.size() != tensors.size()) {
    throw DimensionError("gradcheck: gradient layout does not match parameters");
  }
  Rng rng(options.seed);
  const double h = options.step;
  GradcheckReport report;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto values = tensors[t].values;
    const auto g = grads[t].values;
    if (g.size() != values.size()) {
      throw DimensionError("gradcheck: gradient tensor " + tensors[t].name + " has wrong size");
    }
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    const std::size_t take = std::min(options.coords_per_tensor, coords.size());
    for (std::size_t i = 0; i < take; ++i) std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    coords.resize(take);

    TensorCheck tc{tensors[t].name, take, 0.0};
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + h;
      const double up = forward(probe, config, inputs, labels, Mode::train).loss;
      values[c] = saved - h;
      const double down = forward(probe, config, inputs, labels, Mode::train).loss;
      values[c] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(g[c]), std::abs(fd), 1e-8});
      tc.max_rel_error = std::max(tc.max_rel_error, std::abs(g[c] - fd) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

GradcheckReport gradcheck(const NetworkParams& params, const ArchConfig& config,
                          const Matrix& inputs, std::span<const int> labels,
                          const GradcheckOptions& options) {
  const auto fwd = forward(params, config, inputs, labels, Mode::train);
  const auto grads = backward(params, config, fwd.cache, labels);
  return gradcheck(params, config, inputs, labels, grads, options);
}

SamplePoint sample_kink_free_point(const ArchConfig& config, std::size_t batch_size,
                                   std::uint64_t seed, double margin, std::size_t max_attempts) {
  Rng rng(seed);
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    SamplePoint p;
    p.attempts = attempt;
    p.params = init_params(config, rng.next_u64());
    for (auto& s : p.params.bn_scale)
      for (double& v : s) v = rng.uniform(0.5, 1.5);
    for (auto& s : p.params.bn_shift)
      for (double& v : s) v = 0.5 * rng.normal();
    p.inputs = Matrix(batch_size, config.input_dim);
    for (double& v : p.inputs.data()) v = rng.normal();
    p.labels.resize(batch_size);
    for (int& l : p.labels) l = static_cast<int>(rng.index(config.n_classes));
    const auto fwd = forward(p.params, config, p.inputs, p.labels, Mode::train);
    if (kink_distance(fwd.cache) > margin) return p;
  }
  throw std::runtime_error("sample_kink_free_point: no kink-free point after " +
                           std::to_string(max_attempts) + " attempts");
}

}  // namespace syminv
