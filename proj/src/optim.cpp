#include "syminv/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace syminv {
namespace {

void require_unit_rows(const Matrix& w, const char* what) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (double v : w.row(i)) s += v * v;
    if (!(std::abs(std::sqrt(s) - 1.0) <= kUnitNormTolerance)) {
      throw std::domain_error(std::string(what) + ": row " + std::to_string(i) +
                              " is not unit norm (norm " + std::to_string(std::sqrt(s)) + ")");
    }
  }
}

Vector guarded(Vector d, const char* what, const char* unit) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > kMetricFloor)) {
      throw std::domain_error(std::string(what) + ": " + unit + " " + std::to_string(i) +
                              " has vanishing norm, scaled metric is degenerate");
    }
  }
  return d;
}

std::vector<double> euclidean_step(const std::vector<double>& v, const std::vector<double>& g,
                                   double lr) {
  if (v.size() != g.size()) throw DimensionError("euclidean_step: length mismatch");
  std::vector<double> out = v;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= lr * g[i];
  return out;
}

}  // namespace

std::string_view to_string(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::bsgd: return "bsgd";
    case UpdateRule::sm: return "sm";
    case UpdateRule::un: return "un";
  }
  return "?";
}

UpdateRule parse_update_rule(std::string_view name) {
  if (name == "bsgd") return UpdateRule::bsgd;
  if (name == "sm") return UpdateRule::sm;
  if (name == "un") return UpdateRule::un;
  throw std::invalid_argument("unknown update rule '" + std::string(name) + "'");
}

Vector sm_inverse_metric_left(const Matrix& w) {
  return guarded(diag_of_gram(w), "sm_inverse_metric_left", "row");
}

Vector sm_inverse_metric_right(const Matrix& theta) {
  return guarded(diag_of_col_gram(theta), "sm_inverse_metric_right", "column");
}

Matrix sm_update_left(const Matrix& w, const Matrix& grad, double lr) {
  require_same_shape(w, grad, "sm_update_left");
  return axpy(w, -lr, scale_rows(grad, sm_inverse_metric_left(w)));
}

Matrix sm_update_right(const Matrix& theta, const Matrix& grad, double lr) {
  require_same_shape(theta, grad, "sm_update_right");
  return axpy(theta, -lr, scale_cols(grad, sm_inverse_metric_right(theta)));
}

Matrix un_project(const Matrix& w, const Matrix& z) {
  require_same_shape(w, z, "un_project");
  require_unit_rows(w, "un_project");
  Matrix out = z;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto wi = w.row(i);
    auto oi = out.row(i);
    double inner = 0.0;
    for (std::size_t j = 0; j < wi.size(); ++j) inner += oi[j] * wi[j];
    for (std::size_t j = 0; j < wi.size(); ++j) oi[j] -= inner * wi[j];
  }
  return out;
}

Matrix un_update(const Matrix& w, const Matrix& grad, double lr) {
  // ‖w - λ ḡ‖ >= 1 for tangent ḡ, so the retraction is always defined
  return orth_rows(axpy(w, -lr, un_project(w, grad)));
}

Matrix bsgd_update(const Matrix& w, const Matrix& grad, double lr) { return axpy(w, -lr, grad); }

NetworkParams apply_rule(const NetworkParams& params, const Gradients& grads, UpdateRule rule,
                         double lr) {
  if (grads.weights.size() != params.weights.size() ||
      grads.bn_scale.size() != params.bn_scale.size() ||
      grads.bn_shift.size() != params.bn_shift.size()) {
    throw DimensionError("apply_rule: gradient layout does not match parameters");
  }
  NetworkParams out = params;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    const auto& g = grads.weights[l];
    switch (rule) {
      case UpdateRule::bsgd: out.weights[l] = bsgd_update(w, g, lr); break;
      case UpdateRule::sm: out.weights[l] = sm_update_left(w, g, lr); break;
      case UpdateRule::un: out.weights[l] = un_update(w, g, lr); break;
    }
  }
  out.theta = rule == UpdateRule::sm ? sm_update_right(params.theta, grads.theta, lr)
                                     : bsgd_update(params.theta, grads.theta, lr);
  for (std::size_t l = 0; l < params.bn_scale.size(); ++l) {
    out.bn_scale[l] = euclidean_step(params.bn_scale[l], grads.bn_scale[l], lr);
    out.bn_shift[l] = euclidean_step(params.bn_shift[l], grads.bn_shift[l], lr);
  }
  return out;
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::exp_decay ? "exp" : "bold";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "exp" || name == "exp_decay") return ScheduleKind::exp_decay;
  if (name == "bold" || name == "bold_driver") return ScheduleKind::bold_driver;
  throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

LrSchedule LrSchedule::make(ScheduleKind kind, double base_lr, long double decay, double boost,
                            double cut) {
  // zero is accepted so a run can be frozen
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) {
    throw std::invalid_argument("LrSchedule: base learning rate must be non-negative and finite");
  }
  if (!(decay > 0.0) || !(boost > 0.0) || !(cut > 0.0)) {
    throw std::invalid_argument("LrSchedule: decay, boost and cut must be positive");
  }
  return {kind, base_lr, decay, boost, cut, base_lr, 0};
}

LrSchedule exp_decay_step(LrSchedule schedule) {
  ++schedule.epochs;
  schedule.current_lr = static_cast<double>(
      static_cast<long double>(schedule.base_lr) *
      std::pow(schedule.decay, static_cast<long double>(schedule.epochs)));
  return schedule;
}

LrSchedule bold_driver_step(LrSchedule schedule, double prev_val_err, double curr_val_err) {
  ++schedule.epochs;
  schedule.current_lr *= curr_val_err < prev_val_err ? schedule.boost : schedule.cut;
  return schedule;
}

}  // namespace syminv
