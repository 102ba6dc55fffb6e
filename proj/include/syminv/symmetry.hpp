#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "syminv/network.hpp"
#include "syminv/optim.hpp"

namespace syminv {

enum class ArchKind { arch1, arch2 };

inline ArchKind kind_of(const ArchConfig& config) {
  return config.use_batchnorm ? ArchKind::arch2 : ArchKind::arch1;
}

/// An element of the weight-space symmetry group.
///
/// Arch1 (no batch-norm): the first layer is scaled by the positive scalar
/// alpha0 and every later layer l by a positive diagonal beta[l-1] whose
/// entries repeat within each pooling pair. Layer l >= 3 also divides its
/// columns by the halved diagonal of layer l-1, and theta absorbs 1/alpha0
/// and the halved diagonal of the last layer:
///
///   W1 <- alpha0 W1
///   W2 <- Diag(beta_2) W2
///   Wl <- Diag(beta_l) Wl Diag(beta_{l-1,s})^-1      (l >= 3)
///   θ  <- θ (1/alpha0) Diag(beta_{d,s})^-1
///
/// Arch2 (batch-norm): every layer is scaled row-wise, Wl <- Diag(alpha_l) Wl,
/// with theta, scale and shift untouched. The running statistics follow the
/// pre-activations (mean by alpha, variance by alpha^2) so eval mode is
/// invariant as well.
struct Reparameterization {
  ArchKind kind = ArchKind::arch1;
  double alpha0 = 1.0;
  std::vector<Vector> beta;   // Arch1, one per layer 2..d, length `filters`
  std::vector<Vector> alpha;  // Arch2, one per layer, length `filters`

  /// (beta_1, beta_2, ...) for Arch1 layer index l in 1..d-1 (0-based).
  Vector beta_s(std::size_t l) const;
  void validate(const ArchConfig& config) const;
};

Reparameterization identity_reparam(const ArchConfig& config);

/// Entries drawn log-uniformly from [lo, hi]. With allow_negative (Arch2
/// only) each alpha entry also gets a random sign.
Reparameterization random_reparam(const ArchConfig& config, std::uint64_t seed, double lo,
                                  double hi, bool allow_negative = false);

NetworkParams apply_reparam(const NetworkParams& params, const ArchConfig& config,
                            const Reparameterization& rep);

/// apply(apply(p, first), second) == apply(p, compose(first, second)).
Reparameterization compose(const Reparameterization& first, const Reparameterization& second);
Reparameterization inverse(const Reparameterization& rep);

/// Gradients the reparameterised network must produce when the Euclidean
/// gradient transforms contravariantly: W = D_r W D_c maps ∇W to D_r⁻¹ ∇W D_c⁻¹.
Gradients transform_gradients(const Gradients& grads, const ArchConfig& config,
                              const Reparameterization& rep);

struct InvarianceReport {
  double loss_diff = 0.0;        // max over samples of the per-sample loss difference
  double mean_loss_diff = 0.0;   // difference of the batch-mean loss
  double max_prob_diff = 0.0;    // max over samples and classes
};

InvarianceReport check_loss_invariance(const NetworkParams& params, const ArchConfig& config,
                                       const Reparameterization& rep, const Matrix& inputs,
                                       std::span<const int> labels, Mode mode);

/// Max over layers of ‖∇W̃_l - D_r⁻¹ ∇W_l D_c⁻¹‖_F / ‖D_r⁻¹ ∇W_l D_c⁻¹‖_F
/// (train mode). theta is included for Arch1.
double check_gradient_scaling(const NetworkParams& params, const ArchConfig& config,
                              const Reparameterization& rep, const Matrix& inputs,
                              std::span<const int> labels);

/// Runs `batches.size()` update steps from params and from apply_reparam(params, rep)
/// on the same batches and returns the max over tensors of the relative
/// Frobenius distance between apply_reparam(final, rep) and the reparameterised
/// run's final state. Running statistics are not compared.
double check_trajectory_equivariance(const NetworkParams& params, const ArchConfig& config,
                                     const Reparameterization& rep,
                                     std::span<const Matrix> batches,
                                     std::span<const std::vector<int>> labels, UpdateRule rule,
                                     double lr);

/// |L(step(p)) - L(step(apply_reparam(p, rep)))| for one update on the batch,
/// evaluated in train mode on the same batch.
double check_update_invariance(const NetworkParams& params, const ArchConfig& config,
                               const Reparameterization& rep, const Matrix& inputs,
                               std::span<const int> labels, UpdateRule rule, double lr);

}  // namespace syminv
