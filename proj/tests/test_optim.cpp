#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "support.hpp"
#include "syminv/gradcheck.hpp"
#include "syminv/optim.hpp"
#include "syminv/symmetry.hpp"

namespace syminv {
namespace {

using testing::random_labels;
using testing::random_matrix;
using testing::random_positive;
using testing::small_arch;

TEST(ScaledMetric, InverseMetricValues) {
  EXPECT_EQ(sm_inverse_metric_left(Matrix{{3, 4}}), (Vector{25}));
  for (double v : sm_inverse_metric_left(orth_rows(Matrix{{1, 2}, {3, -1}}))) EXPECT_NEAR(v, 1.0, 1e-15);
  EXPECT_EQ(sm_inverse_metric_right(Matrix{{3}, {4}}), (Vector{25}));
}

TEST(ScaledMetric, DegenerateRowNamed) {
  try {
    sm_inverse_metric_left(Matrix{{1, 0}, {0, 0}});
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sm_inverse_metric_left(Matrix{{1e-16, 0}}), std::domain_error);
  EXPECT_THROW(sm_inverse_metric_right(Matrix{{1, 0}, {1, 0}}), std::domain_error);
}

TEST(ScaledMetric, HandEvaluatedSteps) {
  const auto w = sm_update_left(Matrix{{3, 4}}, Matrix{{1, 0}}, 0.1);
  EXPECT_NEAR(w(0, 0), 0.5, 1e-15);
  EXPECT_EQ(w(0, 1), 4.0);
  const auto t = sm_update_right(Matrix{{3}, {4}}, Matrix{{1}, {0}}, 0.1);
  EXPECT_NEAR(t(0, 0), 0.5, 1e-15);
  EXPECT_EQ(t(1, 0), 4.0);
  const Matrix m{{1, 2}, {3, 4}};
  EXPECT_EQ(sm_update_left(m, Matrix(2, 2), 0.3), m);
  EXPECT_EQ(sm_update_right(m, Matrix(2, 2), 0.3), m);
}

TEST(ScaledMetric, UnitColumnsReduceToEuclidean) {
  Rng rng(1);
  const auto theta = transpose(orth_rows(random_matrix(rng, 3, 5)));
  const auto g = random_matrix(rng, 5, 3);
  EXPECT_LT(max_abs_diff(sm_update_right(theta, g, 0.2), bsgd_update(theta, g, 0.2)), 1e-15);
}

TEST(ScaledMetricProperty, LeftAndRightEquivariance) {
  Rng rng(2);
  for (int c = 0; c < 200; ++c) {
    const auto w = random_matrix(rng, 1 + rng.index(6), 1 + rng.index(6));
    const auto g = random_matrix(rng, w.rows(), w.cols());
    const double lr = rng.uniform(0.0, 0.5);
    const auto a = random_positive(rng, w.rows());
    Vector ainv(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) ainv[i] = 1.0 / a[i];
    const auto lhs = sm_update_left(scale_rows(w, a), scale_rows(g, ainv), lr);
    const auto rhs = scale_rows(sm_update_left(w, g, lr), a);
    EXPECT_LT(relative_error(lhs, rhs), 1e-12) << "case " << c;

    const auto b = random_positive(rng, w.cols());
    Vector binv(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) binv[i] = 1.0 / b[i];
    const auto lhs_r = sm_update_right(scale_cols(w, binv), scale_cols(g, b), lr);
    const auto rhs_r = scale_cols(sm_update_right(w, g, lr), binv);
    EXPECT_LT(relative_error(lhs_r, rhs_r), 1e-12) << "case " << c;
  }
}

TEST(UnitNorm, ProjectionExamples) {
  EXPECT_EQ(un_project(Matrix{{1, 0}}, Matrix{{2, 3}}), (Matrix{{0, 3}}));
  const auto w = orth_rows(Matrix{{1, 2, 2}});
  EXPECT_LT(max_abs(un_project(w, 4.0 * w)), 1e-15);
  Rng rng(3);
  const auto ww = orth_rows(random_matrix(rng, 4, 6));
  const auto t = un_project(ww, random_matrix(rng, 4, 6));
  EXPECT_LT(max_abs_diff(un_project(ww, t), t), 1e-15);
}

TEST(UnitNorm, NonUnitRowsRejected) {
  EXPECT_THROW(un_project(Matrix{{1, 1}}, Matrix{{0, 1}}), std::domain_error);
  EXPECT_THROW(un_update(Matrix{{2, 0}}, Matrix{{0, 1}}, 0.1), std::domain_error);
}

TEST(UnitNorm, HandEvaluatedStep) {
  const auto w = un_update(Matrix{{1, 0}}, Matrix{{0, 1}}, 1.0);
  EXPECT_NEAR(w(0, 0), 1.0 / std::sqrt(2.0), 1e-16);
  EXPECT_NEAR(w(0, 1), -1.0 / std::sqrt(2.0), 1e-16);
  const Matrix e = Matrix::identity(3);
  EXPECT_EQ(un_update(e, Matrix(3, 3), 0.4), e);
}

TEST(UnitNorm, PythagorasForTangentSteps) {
  Rng rng(4);
  for (int c = 0; c < 50; ++c) {
    const auto w = orth_rows(random_matrix(rng, 3, 7));
    const auto g = un_project(w, random_matrix(rng, 3, 7));
    const double lr = rng.uniform(0.0, 2.0);
    const auto step = bsgd_update(w, g, lr);
    const auto gn = diag_of_gram(g), sn = diag_of_gram(step);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(sn[i], 1.0 + lr * lr * gn[i], 1e-12);
    EXPECT_LT(max_abs_diff(orth_rows(step), un_update(w, g, lr)), 1e-15);
  }
}

TEST(UnitNormProperty, ManifoldAndTangencyPreserved) {
  Rng rng(5);
  for (int c = 0; c < 20; ++c) {
    auto w = orth_rows(random_matrix(rng, 8, 16));
    for (int s = 0; s < 200; ++s) w = un_update(w, random_matrix(rng, 8, 16, std::exp(rng.uniform(-3, 3))), 0.1);
    for (double d : diag_of_gram(w)) EXPECT_NEAR(std::sqrt(d), 1.0, 1e-12);
    const auto p = un_project(w, random_matrix(rng, 8, 16, 10.0));
    for (std::size_t i = 0; i < 8; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 16; ++j) dot += p(i, j) * w(i, j);
      EXPECT_LT(std::abs(dot), 1e-13);
    }
  }
}

TEST(Euclidean, HandEvaluatedStep) {
  EXPECT_EQ(bsgd_update(Matrix{{1, 0}}, Matrix{{1, 1}}, 0.5), (Matrix{{0.5, -0.5}}));
  EXPECT_EQ(bsgd_update(Matrix{{1, 0}}, Matrix(1, 2), 0.5), (Matrix{{1, 0}}));
}

Gradients random_grads(const NetworkParams& p, Rng& rng) {
  auto g = Gradients::zeros_like(p);
  for (auto& t : gradient_tensors(g))
    for (double& v : t.values) v = rng.normal();
  return g;
}

TEST(ApplyRule, ScaledMetricMatchesEuclideanAtUnitInit) {
  const auto a = small_arch(3, true, 6);
  auto p = init_params(a, 1);
  // the right metric is the identity when the columns of θ are unit
  p.theta = transpose(orth_rows(transpose(p.theta)));
  Rng rng(6);
  const auto g = random_grads(p, rng);
  const auto s = apply_rule(p, g, UpdateRule::sm, 0.1), b = apply_rule(p, g, UpdateRule::bsgd, 0.1);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_LT(max_abs_diff(s.weights[l], b.weights[l]), 1e-15);
  EXPECT_LT(max_abs_diff(s.theta, b.theta), 1e-15);
}

TEST(ApplyRule, UnitNormKeepsFiltersOnManifold) {
  const auto a = small_arch(3, false, 6);
  auto p = init_params(a, 2);
  Rng rng(7);
  for (int s = 0; s < 100; ++s) p = apply_rule(p, random_grads(p, rng), UpdateRule::un, 0.3);
  for (const auto& w : p.weights)
    for (double d : diag_of_gram(w)) EXPECT_NEAR(d, 1.0, 1e-12);
}

TEST(ApplyRule, ZeroGradientsKeepParameters) {
  const auto a = small_arch(2, true, 4);
  const auto p = init_params(a, 3);
  for (auto r : {UpdateRule::bsgd, UpdateRule::sm})
    EXPECT_EQ(apply_rule(p, Gradients::zeros_like(p), r, 0.7), p);
  // UN renormalises every row, which may move an entry by an ulp
  const auto q = apply_rule(p, Gradients::zeros_like(p), UpdateRule::un, 0.7);
  for (std::size_t l = 0; l < p.weights.size(); ++l) EXPECT_LT(max_abs_diff(q.weights[l], p.weights[l]), 1e-15);
  EXPECT_EQ(q.theta, p.theta);
  EXPECT_EQ(q.bn_scale, p.bn_scale);
  EXPECT_EQ(q.bn_shift, p.bn_shift);
}

TEST(ApplyRule, BatchNormParametersTakeEuclideanSteps) {
  const auto a = small_arch(2, true, 4);
  const auto p = init_params(a, 3);
  Rng rng(8);
  const auto g = random_grads(p, rng);
  for (auto r : {UpdateRule::bsgd, UpdateRule::sm, UpdateRule::un}) {
    const auto q = apply_rule(p, g, r, 0.25);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_DOUBLE_EQ(q.bn_scale[l][j], p.bn_scale[l][j] - 0.25 * g.bn_scale[l][j]);
        EXPECT_DOUBLE_EQ(q.bn_shift[l][j], p.bn_shift[l][j] - 0.25 * g.bn_shift[l][j]);
      }
  }
}

TEST(ApplyRule, UnitNormThetaIsEuclidean) {
  const auto a = small_arch(2, false, 4);
  const auto p = init_params(a, 3);
  Rng rng(9);
  const auto g = random_grads(p, rng);
  EXPECT_EQ(apply_rule(p, g, UpdateRule::un, 0.1).theta, bsgd_update(p.theta, g.theta, 0.1));
}

TEST(RuleNames, RoundTrip) {
  for (auto r : {UpdateRule::bsgd, UpdateRule::sm, UpdateRule::un}) EXPECT_EQ(parse_update_rule(to_string(r)), r);
  EXPECT_THROW(parse_update_rule("adam"), std::invalid_argument);
  EXPECT_EQ(parse_schedule_kind("exp"), ScheduleKind::exp_decay);
  EXPECT_EQ(parse_schedule_kind("bold_driver"), ScheduleKind::bold_driver);
  EXPECT_THROW(parse_schedule_kind("cosine"), std::invalid_argument);
}

std::vector<Matrix> random_batches(Rng& rng, const ArchConfig& a, std::size_t steps, std::size_t n) {
  std::vector<Matrix> out;
  for (std::size_t s = 0; s < steps; ++s) out.push_back(random_matrix(rng, n, a.input_dim));
  return out;
}

TEST(Trajectory, ScaledMetricIsEquivariantOnArch2) {
  auto a = small_arch(2, true, 8, 20);
  a.bn_epsilon = 0.0;
  for (std::uint64_t c = 0; c < 10; ++c) {
    Rng rng(derive_seed(20, c, "batches"));
    const auto pt = sample_kink_free_point(a, 6, derive_seed(20, c, "point"), 0.0);
    const auto r = random_reparam(a, derive_seed(20, c, "rep"), 0.5, 2.0);
    const auto xs = random_batches(rng, a, 5, 6);
    std::vector<std::vector<int>> ys;
    for (int s = 0; s < 5; ++s) ys.push_back(random_labels(rng, 6));
    EXPECT_LT(check_trajectory_equivariance(pt.params, a, r, xs, ys, UpdateRule::sm, 0.1), 1e-8);
    EXPECT_GT(check_trajectory_equivariance(pt.params, a, r, xs, ys, UpdateRule::bsgd, 0.1), 1e-3);
  }
}

TEST(Trajectory, ScaledMetricIsEquivariantOnTwoLayerArch1) {
  const auto a = small_arch(2, false, 8, 20);
  Rng rng(21);
  const auto pt = sample_kink_free_point(a, 6, 22, 1e-3);
  const auto r = random_reparam(a, 23, 0.5, 2.0);
  const auto xs = random_batches(rng, a, 5, 6);
  std::vector<std::vector<int>> ys;
  for (int s = 0; s < 5; ++s) ys.push_back(random_labels(rng, 6));
  EXPECT_LT(check_trajectory_equivariance(pt.params, a, r, xs, ys, UpdateRule::sm, 0.05), 1e-8);
}

}  // namespace

void PrintTo(UpdateRule r, std::ostream* os) { *os << to_string(r); }

namespace {

class DescentSuite : public ::testing::TestWithParam<UpdateRule> {};

TEST_P(DescentSuite, SmallStepDoesNotIncreaseBatchLoss) {
  for (bool bn : {false, true}) {
    const auto a = small_arch(2, bn, 8, 20);
    for (std::uint64_t c = 0; c < 10; ++c) {
      auto pt = sample_kink_free_point(a, 8, derive_seed(30, c, bn ? "bn" : "plain"), 1e-4);
      for (auto& w : pt.params.weights) w = orth_rows(w);
      const auto fwd = forward(pt.params, a, pt.inputs, pt.labels, Mode::train);
      const auto g = backward(pt.params, a, fwd.cache, pt.labels);
      const auto q = apply_rule(pt.params, g, GetParam(), 1e-6);
      EXPECT_LE(forward(q, a, pt.inputs, pt.labels, Mode::train).loss, fwd.loss) << "case " << c;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Rules, DescentSuite,
                         ::testing::Values(UpdateRule::bsgd, UpdateRule::sm, UpdateRule::un));

TEST(Schedule, ExponentialDecay) {
  auto s = LrSchedule::make(ScheduleKind::exp_decay, 1e-3);
  EXPECT_EQ(s.current_lr, 1e-3);
  s = exp_decay_step(exp_decay_step(s));
  EXPECT_NEAR(s.current_lr, 9.025e-4, 1e-18);
  for (int e = 0; e < 5000; ++e) s = exp_decay_step(s);
  EXPECT_GT(s.current_lr, 0.0);
}

TEST(Schedule, ExponentialDecayHasSingleRounding) {
  for (double base : {1e-2, 1e-3, 1e-4, 1e-5}) {
    auto s = LrSchedule::make(ScheduleKind::exp_decay, base);
    long double want = base;
    for (int e = 1; e <= 60; ++e) {
      s = exp_decay_step(s);
      want *= 0.95L;
      const double rel = static_cast<double>(std::abs((s.current_lr - want) / want));
      EXPECT_LT(rel, 1e-15) << "epoch " << e;
    }
  }
}

TEST(Schedule, BoldDriver) {
  auto s = LrSchedule::make(ScheduleKind::bold_driver, 0.01);
  EXPECT_DOUBLE_EQ(bold_driver_step(s, 0.5, 0.4).current_lr, 0.0105);
  EXPECT_DOUBLE_EQ(bold_driver_step(s, 0.4, 0.5).current_lr, 0.005);
  EXPECT_DOUBLE_EQ(bold_driver_step(s, 0.4, 0.4).current_lr, 0.005);
  auto t = LrSchedule::make(ScheduleKind::bold_driver, 0.01, 0.95, 1.1, 0.25);
  EXPECT_DOUBLE_EQ(bold_driver_step(t, 1, 0).current_lr, 0.011);
  EXPECT_DOUBLE_EQ(bold_driver_step(t, 0, 1).current_lr, 0.0025);
}

TEST(Schedule, InvalidSettingsRejected) {
  EXPECT_THROW(LrSchedule::make(ScheduleKind::exp_decay, -1.0), std::invalid_argument);
  EXPECT_THROW(LrSchedule::make(ScheduleKind::exp_decay, 0.1, 0.0), std::invalid_argument);
  EXPECT_NO_THROW(LrSchedule::make(ScheduleKind::exp_decay, 0.0));
}

}  // namespace
}  // namespace syminv
