#include "syminv/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "syminv/random.hpp"

namespace syminv {
namespace {

Vector reciprocal(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / v[i];
  return out;
}

Vector product(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("reparameterization factor length mismatch");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Vector row_factor(const Reparameterization& rep, const ArchConfig& config, std::size_t l) {
  if (rep.kind == ArchKind::arch2) return rep.alpha[l];
  if (l == 0) return Vector(config.filters, rep.alpha0);
  return rep.beta[l - 1];
}

Vector col_factor(const Reparameterization& rep, const ArchConfig& config, std::size_t l) {
  if (rep.kind == ArchKind::arch1 && l >= 2) return reciprocal(rep.beta_s(l - 1));
  return Vector(config.layer_input_dim(l), 1.0);
}

Vector theta_factor(const Reparameterization& rep, const ArchConfig& config) {
  if (rep.kind == ArchKind::arch2) return Vector(config.pooled_dim(), 1.0);
  Vector f = config.depth >= 2 ? reciprocal(rep.beta_s(config.depth - 1))
                               : Vector(config.pooled_dim(), 1.0);
  for (double& v : f) v /= rep.alpha0;
  return f;
}

double log_uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

Vector per_sample_losses(const Matrix& scores, std::span<const int> labels) {
  Vector out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto s = scores.row(i);
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    out[i] = std::log(z) - (s[labels[i]] - mx);
  }
  return out;
}

}  // namespace

Vector Reparameterization::beta_s(std::size_t l) const {
  if (kind != ArchKind::arch1 || l == 0 || l > beta.size()) {
    throw std::out_of_range("beta_s: layer " + std::to_string(l) + " has no paired diagonal");
  }
  const auto& b = beta[l - 1];
  Vector s(b.size() / 2);
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = b[2 * k];
  return s;
}

void Reparameterization::validate(const ArchConfig& config) const {
  if (kind != kind_of(config)) throw std::invalid_argument("reparameterization kind does not match config");
  if (kind == ArchKind::arch1) {
    if (!(alpha0 > 0.0)) throw std::invalid_argument("Arch1 alpha0 must be positive");
    if (beta.size() != config.depth - 1) throw DimensionError("Arch1 needs one beta per layer after the first");
    for (const auto& b : beta) {
      if (b.size() != config.filters) throw DimensionError("beta has wrong length");
      for (std::size_t k = 0; k < b.size(); k += 2) {
        if (!(b[k] > 0.0) || b[k] != b[k + 1]) {
          throw std::invalid_argument("Arch1 beta entries must be positive and equal within each pooling pair");
        }
      }
    }
  } else {
    if (alpha.size() != config.depth) throw DimensionError("Arch2 needs one alpha per layer");
    for (const auto& a : alpha) {
      if (a.size() != config.filters) throw DimensionError("alpha has wrong length");
      for (double v : a)
        if (v == 0.0 || !std::isfinite(v)) throw std::invalid_argument("Arch2 alpha entries must be non-zero");
    }
  }
}

Reparameterization identity_reparam(const ArchConfig& config) {
  return random_reparam(config, 0, 1.0, 1.0);
}

Reparameterization random_reparam(const ArchConfig& config, std::uint64_t seed, double lo,
                                  double hi, bool allow_negative) {
  if (!(lo > 0.0) || !(hi >= lo)) throw std::invalid_argument("random_reparam: need 0 < lo <= hi");
  config.validate();
  Rng rng(seed);
  Reparameterization rep;
  rep.kind = kind_of(config);
  if (rep.kind == ArchKind::arch1) {
    rep.alpha0 = log_uniform(rng, lo, hi);
    for (std::size_t l = 1; l < config.depth; ++l) {
      Vector b(config.filters);
      for (std::size_t k = 0; k < b.size(); k += 2) b[k] = b[k + 1] = log_uniform(rng, lo, hi);
      rep.beta.push_back(std::move(b));
    }
  } else {
    for (std::size_t l = 0; l < config.depth; ++l) {
      Vector a(config.filters);
      for (double& v : a) {
        v = log_uniform(rng, lo, hi);
        if (allow_negative && rng.uniform() < 0.5) v = -v;
      }
      rep.alpha.push_back(std::move(a));
    }
  }
  return rep;
}

NetworkParams apply_reparam(const NetworkParams& params, const ArchConfig& config,
                            const Reparameterization& rep) {
  rep.validate(config);
  check_shapes(params, config);
  NetworkParams out = params;
  for (std::size_t l = 0; l < config.depth; ++l) {
    out.weights[l] = scale_rows(out.weights[l], row_factor(rep, config, l));
    if (rep.kind == ArchKind::arch1 && l >= 2) {
      out.weights[l] = scale_cols(out.weights[l], col_factor(rep, config, l));
    }
  }
  if (rep.kind == ArchKind::arch1) out.theta = scale_cols(out.theta, theta_factor(rep, config));
  for (std::size_t l = 0; l < out.bn_run_mean.size(); ++l) {
    for (std::size_t k = 0; k < out.bn_run_mean[l].size(); ++k) {
      const double a = rep.alpha[l][k];
      out.bn_run_mean[l][k] *= a;
      out.bn_run_var[l][k] *= a * a;
    }
  }
  return out;
}

Reparameterization compose(const Reparameterization& first, const Reparameterization& second) {
  if (first.kind != second.kind) throw std::invalid_argument("compose: kinds differ");
  Reparameterization out = first;
  out.alpha0 = first.alpha0 * second.alpha0;
  if (first.beta.size() != second.beta.size() || first.alpha.size() != second.alpha.size()) {
    throw DimensionError("compose: layer counts differ");
  }
  for (std::size_t l = 0; l < out.beta.size(); ++l) out.beta[l] = product(first.beta[l], second.beta[l]);
  for (std::size_t l = 0; l < out.alpha.size(); ++l) out.alpha[l] = product(first.alpha[l], second.alpha[l]);
  return out;
}

Reparameterization inverse(const Reparameterization& rep) {
  Reparameterization out = rep;
  out.alpha0 = 1.0 / rep.alpha0;
  for (auto& b : out.beta) b = reciprocal(b);
  for (auto& a : out.alpha) a = reciprocal(a);
  return out;
}

Gradients transform_gradients(const Gradients& grads, const ArchConfig& config,
                              const Reparameterization& rep) {
  rep.validate(config);
  Gradients out = grads;
  for (std::size_t l = 0; l < config.depth; ++l) {
    out.weights[l] = scale_rows(out.weights[l], reciprocal(row_factor(rep, config, l)));
    if (rep.kind == ArchKind::arch1 && l >= 2) {
      out.weights[l] = scale_cols(out.weights[l], reciprocal(col_factor(rep, config, l)));
    }
  }
  if (rep.kind == ArchKind::arch1) out.theta = scale_cols(out.theta, reciprocal(theta_factor(rep, config)));
  return out;
}

InvarianceReport check_loss_invariance(const NetworkParams& params, const ArchConfig& config,
                                       const Reparameterization& rep, const Matrix& inputs,
                                       std::span<const int> labels, Mode mode) {
  const auto base = forward(params, config, inputs, labels, mode);
  const auto moved = forward(apply_reparam(params, config, rep), config, inputs, labels, mode);
  const auto l0 = per_sample_losses(base.cache.scores, labels);
  const auto l1 = per_sample_losses(moved.cache.scores, labels);
  InvarianceReport r;
  for (std::size_t i = 0; i < l0.size(); ++i) r.loss_diff = std::max(r.loss_diff, std::abs(l0[i] - l1[i]));
  r.mean_loss_diff = std::abs(base.loss - moved.loss);
  r.max_prob_diff = max_abs_diff(base.probs, moved.probs);
  return r;
}

double check_gradient_scaling(const NetworkParams& params, const ArchConfig& config,
                              const Reparameterization& rep, const Matrix& inputs,
                              std::span<const int> labels) {
  const auto moved_params = apply_reparam(params, config, rep);
  const auto f0 = forward(params, config, inputs, labels, Mode::train);
  const auto f1 = forward(moved_params, config, inputs, labels, Mode::train);
  const auto expected = transform_gradients(backward(params, config, f0.cache, labels), config, rep);
  const auto actual = backward(moved_params, config, f1.cache, labels);
  double worst = 0.0;
  for (std::size_t l = 0; l < config.depth; ++l) {
    worst = std::max(worst, relative_error(actual.weights[l], expected.weights[l]));
  }
  if (rep.kind == ArchKind::arch1) worst = std::max(worst, relative_error(actual.theta, expected.theta));
  return worst;
}

double check_trajectory_equivariance(const NetworkParams& params, const ArchConfig& config,
                                     const Reparameterization& rep,
                                     std::span<const Matrix> batches,
                                     std::span<const std::vector<int>> labels, UpdateRule rule,
                                     double lr) {
  if (batches.size() != labels.size()) throw DimensionError("trajectory: batch/label count mismatch");
  NetworkParams a = params;
  NetworkParams b = apply_reparam(params, config, rep);
  for (std::size_t s = 0; s < batches.size(); ++s) {
    const auto fa = forward(a, config, batches[s], labels[s], Mode::train);
    const auto fb = forward(b, config, batches[s], labels[s], Mode::train);
    a = apply_rule(a, backward(a, config, fa.cache, labels[s]), rule, lr);
    b = apply_rule(b, backward(b, config, fb.cache, labels[s]), rule, lr);
  }
  const auto mapped = apply_reparam(a, config, rep);
  double worst = 0.0;
  for (std::size_t l = 0; l < config.depth; ++l)
    worst = std::max(worst, relative_error(b.weights[l], mapped.weights[l]));
  worst = std::max(worst, relative_error(b.theta, mapped.theta));
  for (std::size_t l = 0; l < b.bn_scale.size(); ++l) {
    const Matrix sb(1, b.bn_scale[l].size(), b.bn_scale[l]);
    const Matrix sm(1, mapped.bn_scale[l].size(), mapped.bn_scale[l]);
    const Matrix hb(1, b.bn_shift[l].size(), b.bn_shift[l]);
    const Matrix hm(1, mapped.bn_shift[l].size(), mapped.bn_shift[l]);
    worst = std::max({worst, relative_error(sb, sm), relative_error(hb, hm, 1e-12)});
  }
  return worst;
}

double check_update_invariance(const NetworkParams& params, const ArchConfig& config,
                               const Reparameterization& rep, const Matrix& inputs,
                               std::span<const int> labels, UpdateRule rule, double lr) {
  auto step = [&](const NetworkParams& p) {
    const auto f = forward(p, config, inputs, labels, Mode::train);
    return apply_rule(p, backward(p, config, f.cache, labels), rule, lr);
  };
  const auto a = step(params);
  const auto b = step(apply_reparam(params, config, rep));
  return std::abs(forward(a, config, inputs, labels, Mode::train).loss -
                  forward(b, config, inputs, labels, Mode::train).loss);
}

}  // namespace syminv
