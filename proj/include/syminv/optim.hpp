#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "syminv/network.hpp"

namespace syminv {

/// Weight update applied to the filters W_l and the classifier theta.
///   bsgd: plain Euclidean SGD (from unit-normalised initial filters).
///   sm:   scaled metric; rows of W_l are stepped by diag(W Wᵀ) times the
///         Euclidean gradient, columns of theta by diag(θᵀθ).
///   un:   unit-norm filters; the gradient is projected onto the tangent
///         space of the oblique manifold and the step is retracted by row
///         normalisation. theta takes a Euclidean step.
/// Batch-norm scale and shift always take Euclidean steps.
enum class UpdateRule { bsgd, sm, un };

std::string_view to_string(UpdateRule rule);
UpdateRule parse_update_rule(std::string_view name);

/// Squared row norms below this make the scaled metric degenerate.
inline constexpr double kMetricFloor = 1e-30;
/// Tolerance on |‖w_i‖ - 1| accepted by the unit-norm operations.
inline constexpr double kUnitNormTolerance = 1e-10;

/// diag(W Wᵀ): the inverse of the left scaled metric. Throws std::domain_error
/// naming the row when a squared norm is below kMetricFloor.
Vector sm_inverse_metric_left(const Matrix& w);
/// diag(θᵀθ): the inverse of the right scaled metric acting on columns.
Vector sm_inverse_metric_right(const Matrix& theta);

Matrix sm_update_left(const Matrix& w, const Matrix& grad, double lr);
Matrix sm_update_right(const Matrix& theta, const Matrix& grad, double lr);

/// Π_W(Z) = Z - Diag(diag(Z Wᵀ)) W for W with unit rows.
Matrix un_project(const Matrix& w, const Matrix& z);
Matrix un_update(const Matrix& w, const Matrix& grad, double lr);

Matrix bsgd_update(const Matrix& w, const Matrix& grad, double lr);

NetworkParams apply_rule(const NetworkParams& params, const Gradients& grads, UpdateRule rule,
                         double lr);

enum class ScheduleKind { exp_decay, bold_driver };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::exp_decay;
  double base_lr = 1e-2;
  long double decay = 0.95L;  // extended so that 0.95 is held to ~1e-20
  double boost = 1.05;
  double cut = 0.5;
  double current_lr = 1e-2;
  std::size_t epochs = 0;

  static LrSchedule make(ScheduleKind kind, double base_lr, long double decay = 0.95L,
                         double boost = 1.05, double cut = 0.5);
};

/// One epoch of exponential decay. The rate is recomputed as
/// base_lr * decay^epochs rather than multiplied in place, so it carries a
/// single rounding error however many epochs have passed.
LrSchedule exp_decay_step(LrSchedule schedule);

/// Multiplies the rate by `boost` when the validation error went down and by
/// `cut` otherwise (equal counts as not improved).
LrSchedule bold_driver_step(LrSchedule schedule, double prev_val_err, double curr_val_err);

}  // namespace syminv
