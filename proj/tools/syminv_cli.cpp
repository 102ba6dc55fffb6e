// Command-line driver: training runs, repeated experiments, gradient checks
// and symmetry checks.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "syminv/checkpoint.hpp"
#include "syminv/gradcheck.hpp"
#include "syminv/harness.hpp"
#include "syminv/mnist.hpp"
#include "syminv/random.hpp"
#include "syminv/results.hpp"
#include "syminv/symmetry.hpp"

namespace {

using namespace syminv;

struct CommonOptions {
  std::size_t depth = 2;
  std::size_t filters = 64;
  bool batchnorm = false;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::string rule = "sm";
  std::vector<std::string> rules{"sm"};
  std::string schedule = "bold";
  std::vector<std::string> schedules{"bold"};
  std::vector<double> lr_candidates{1e-2, 1e-3, 1e-4, 1e-5};
  double lr = -1.0;
  std::size_t batch_size = 100;
  std::size_t repeats = 10;
  std::size_t min_epochs = 25;
  std::size_t max_epochs = 60;
  std::size_t train_count = 50000;
  std::size_t val_count = 10000;
  std::size_t select_train = 1000;
  std::size_t select_val = 500;
  std::size_t select_epochs = 50;
  std::size_t test_limit = 0;
  long double decay = 0.95L;
  double boost = 1.05;
  double cut = 0.5;
  std::string data_dir;
  std::string out_dir = "results";
  std::string checkpoint;
  bool quiet = false;
};

void add_arch_flags(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--depth", o.depth, "Number of hidden layers (2 or 4 in the reference setup)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--filters", o.filters, "Filters per layer (even)");
  cmd->add_flag("--batchnorm,!--no-batchnorm", o.batchnorm, "Arch2 (batch-norm) instead of Arch1");
  cmd->add_option("--bn-epsilon", o.bn_epsilon, "Batch-norm epsilon");
  cmd->add_option("--bn-momentum", o.bn_momentum, "Running-statistics momentum");
  cmd->add_option("--seed", o.seed, "Master seed");
}

void add_train_flags(CLI::App* cmd, TrainOptions& t, bool grid) {
  if (grid) {
    cmd->add_option("--rules", t.rules, "Update rules to run: bsgd, sm, un")->delimiter(',');
    cmd->add_option("--schedules", t.schedules, "Schedules to run: exp, bold")->delimiter(',');
    cmd->add_option("--repeats", t.repeats, "Repeats per configuration")->check(CLI::PositiveNumber);
  } else {
    cmd->add_option("--rule", t.rule, "Update rule: bsgd, sm, un");
    cmd->add_option("--schedule", t.schedule, "Learning-rate schedule: exp, bold");
    cmd->add_option("--lr", t.lr, "Skip selection and train with this rate");
    cmd->add_option("--checkpoint", t.checkpoint, "Write the final parameters here");
  }
  cmd->add_option("--lr-candidates", t.lr_candidates, "Candidate base rates")->delimiter(',');
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size");
  cmd->add_option("--min-epochs", t.min_epochs, "Epochs before stopping rules apply");
  cmd->add_option("--max-epochs", t.max_epochs, "Epoch cap");
  cmd->add_option("--train-count", t.train_count, "Training split size");
  cmd->add_option("--val-count", t.val_count, "Validation split size");
  cmd->add_option("--select-train", t.select_train, "Rate-selection training subset");
  cmd->add_option("--select-val", t.select_val, "Rate-selection validation subset");
  cmd->add_option("--select-epochs", t.select_epochs, "Rate-selection epochs");
  cmd->add_option("--test-limit", t.test_limit, "Use only the first N test images (0 = all)");
  cmd->add_option("--decay", t.decay, "Exponential decay factor per epoch");
  cmd->add_option("--boost", t.boost, "Bold-driver increase factor");
  cmd->add_option("--cut", t.cut, "Bold-driver decrease factor");
  cmd->add_option("--data-dir", t.data_dir, "MNIST directory (default: $MNIST_DATA_DIR or data/mnist)");
  cmd->add_option("--out", t.out_dir, "Output directory");
  cmd->add_flag("--quiet", t.quiet, "Only print the summary");
}

ArchConfig make_arch(const CommonOptions& o) {
  ArchConfig a;
  a.depth = o.depth;
  a.filters = o.filters;
  a.use_batchnorm = o.batchnorm;
  a.bn_epsilon = o.bn_epsilon;
  a.bn_momentum = o.bn_momentum;
  return a;
}

ExperimentConfig make_experiment(const CommonOptions& o, const TrainOptions& t) {
  ExperimentConfig c;
  c.arch = make_arch(o);
  c.lr_candidates = t.lr_candidates;
  c.batch_size = t.batch_size;
  c.repeats = t.repeats;
  c.seed = o.seed;
  c.min_epochs = t.min_epochs;
  c.max_epochs = t.max_epochs;
  c.train_count = t.train_count;
  c.val_count = t.val_count;
  c.select_train_count = t.select_train;
  c.select_val_count = t.select_val;
  c.select_epochs = t.select_epochs;
  c.decay = t.decay;
  c.boost = t.boost;
  c.cut = t.cut;
  return c;
}

ExperimentData load_data(const TrainOptions& t) {
  const auto dir = resolve_mnist_dir(t.data_dir);
  auto files = load_mnist(dir);
  if (t.test_limit > 0 && t.test_limit < files.test.size()) {
    std::vector<std::size_t> idx(t.test_limit);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    files.test = files.test.subset(idx);
  }
  return {std::move(files.train), std::move(files.test)};
}

ProgressFn progress_printer(bool quiet) {
  if (quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << "\n"; };
}

void print_summary(const ExperimentSummary& s) {
  std::printf("%s depth=%zu rule=%s schedule=%s mean_test_err=%.4f std_test_err=%.4f runs=%zu diverged=%zu\n",
              s.arch.c_str(), s.depth, s.rule.c_str(), s.schedule.c_str(), s.mean_test_err,
              s.std_test_err, s.n_runs, s.n_diverged);
}

int cmd_train(const CommonOptions& o, const TrainOptions& t) {
  ExperimentConfig c = make_experiment(o, t);
  c.rule = parse_update_rule(t.rule);
  c.schedule = parse_schedule_kind(t.schedule);
  c.repeats = 1;
  c.validate();
  const auto data = load_data(t);
  const auto progress = progress_printer(t.quiet);
  double lr = t.lr;
  if (lr < 0.0) {
    lr = select_learning_rate(c, data, derive_seed(c.seed, 0, "select"), progress).lr;
    if (progress) progress("selected lr " + std::to_string(lr));
  }
  ExperimentOutcome outcome;
  outcome.runs.push_back(run_training(c, data, lr, derive_seed(c.seed, 0, "train"), progress));
  outcome.summary = summarize(c, outcome.runs);
  emit_results({outcome}, t.out_dir);
  if (!t.checkpoint.empty()) save_checkpoint(t.checkpoint, c.arch, outcome.runs.front().final_params);
  const auto& run = outcome.runs.front();
  std::printf("lr=%g epochs=%zu termination=%s final_test_err=%.4f wall=%.1fs\n", lr,
              run.epochs.size(), std::string(to_string(run.termination)).c_str(),
              run.final_test_error, run.wall_seconds);
  return run.diverged() ? 2 : 0;
}

int cmd_experiment(const CommonOptions& o, const TrainOptions& t) {
  const auto data = load_data(t);
  const auto progress = progress_printer(t.quiet);
  std::vector<ExperimentOutcome> outcomes;
  for (const auto& sched : t.schedules) {
    for (const auto& rule : t.rules) {
      ExperimentConfig c = make_experiment(o, t);
      c.rule = parse_update_rule(rule);
      c.schedule = parse_schedule_kind(sched);
      c.validate();
      if (progress) progress("== " + rule + " / " + sched);
      outcomes.push_back(run_experiment(c, data, progress));
      print_summary(outcomes.back().summary);
    }
  }
  emit_results(outcomes, t.out_dir);
  return 0;
}

struct CheckOptions {
  std::size_t batch = 8;
  std::size_t input_dim = 784;
  double step = 1e-5;
  std::size_t coords = 50;
  std::size_t trials = 100;
  double lo = 0.1;
  double hi = 10.0;
};

int cmd_gradcheck(CommonOptions o, const CheckOptions& k) {
  ArchConfig a = make_arch(o);
  a.input_dim = k.input_dim;
  a.validate();
  const auto point = sample_kink_free_point(a, k.batch, o.seed, 10.0 * k.step);
  const auto report = gradcheck(point.params, a, point.inputs, point.labels,
                                GradcheckOptions{k.step, k.coords, o.seed});
  std::printf("%s depth=%zu filters=%zu batch=%zu step=%g (point found after %zu draws)\n",
              a.use_batchnorm ? "arch2" : "arch1", a.depth, a.filters, k.batch, k.step,
              point.attempts);
  for (const auto& t : report.tensors)
    std::printf("  %-10s coords=%-4zu max_rel_err=%.3e\n", t.name.c_str(), t.coords, t.max_rel_error);
  std::printf("max_rel_err=%.3e %s\n", report.max_rel_error, report.max_rel_error < 1e-6 ? "PASS" : "FAIL");
  return report.max_rel_error < 1e-6 ? 0 : 1;
}

int cmd_symmetry(CommonOptions o, const CheckOptions& k) {
  ArchConfig a = make_arch(o);
  a.input_dim = k.input_dim;
  a.validate();
  double worst_loss = 0.0, worst_prob = 0.0, worst_grad = 0.0;
  for (std::size_t i = 0; i < k.trials; ++i) {
    const auto point = sample_kink_free_point(a, k.batch, derive_seed(o.seed, i, "point"), 0.0);
    const auto rep = random_reparam(a, derive_seed(o.seed, i, "rep"), k.lo, k.hi);
    const auto inv = check_loss_invariance(point.params, a, rep, point.inputs, point.labels, Mode::train);
    worst_loss = std::max(worst_loss, inv.loss_diff);
    worst_prob = std::max(worst_prob, inv.max_prob_diff);
    worst_grad = std::max(worst_grad,
                          check_gradient_scaling(point.params, a, rep, point.inputs, point.labels));
  }
  std::printf("%s depth=%zu filters=%zu trials=%zu scale range [%g, %g] bn_epsilon=%g\n",
              a.use_batchnorm ? "arch2" : "arch1", a.depth, a.filters, k.trials, k.lo, k.hi,
              a.bn_epsilon);
  std::printf("  loss invariance:      max |dL| = %.3e, max |dy| = %.3e\n", worst_loss, worst_prob);
  std::printf("  gradient covariance:  max rel err = %.3e\n", worst_grad);

  if (a.use_batchnorm) {
    double neg = 0.0;
    for (std::size_t i = 0; i < k.trials; ++i) {
      const auto point = sample_kink_free_point(a, k.batch, derive_seed(o.seed, i, "point"), 0.0);
      const auto rep = random_reparam(a, derive_seed(o.seed, i, "neg"), k.lo, k.hi, true);
      neg = std::max(neg, check_loss_invariance(point.params, a, rep, point.inputs, point.labels,
                                                Mode::train).loss_diff);
    }
    std::printf("  signed diagonals:     max |dL| = %.3e (negative entries are not absorbed)\n", neg);
  }

  const auto point = sample_kink_free_point(a, k.batch, derive_seed(o.seed, 0, "traj"), 0.0);
  const auto rep = random_reparam(a, derive_seed(o.seed, 0, "traj-rep"), 0.5, 2.0);
  std::vector<Matrix> batches;
  std::vector<std::vector<int>> labels;
  Rng rng(derive_seed(o.seed, 0, "traj-batches"));
  for (int s = 0; s < 5; ++s) {
    Matrix x(k.batch, a.input_dim);
    for (double& v : x.data()) v = rng.normal();
    std::vector<int> y(k.batch);
    for (int& v : y) v = static_cast<int>(rng.index(a.n_classes));
    batches.push_back(std::move(x));
    labels.push_back(std::move(y));
  }
  // UN is left out: rescaled filters are off its manifold
  for (auto rule : {UpdateRule::bsgd, UpdateRule::sm}) {
    const double d = check_trajectory_equivariance(point.params, a, rep, batches, labels, rule, 0.1);
    std::printf("  5-step trajectory %-4s: rel distance to reparameterised run = %.3e\n",
                std::string(to_string(rule)).c_str(), d);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetry-invariant SGD for fully connected ReLU/max-pool networks"};
  app.require_subcommand(1);

  CommonOptions common;
  TrainOptions train_opts;
  CheckOptions check_opts;

  auto* train = app.add_subcommand("train", "Select a rate (unless --lr) and train one configuration");
  add_arch_flags(train, common);
  add_train_flags(train, train_opts, false);

  auto* experiment = app.add_subcommand("experiment", "Repeated selection + training over a rule/schedule grid");
  add_arch_flags(experiment, common);
  add_train_flags(experiment, train_opts, true);

  auto* grad = app.add_subcommand("gradcheck", "Backprop against central differences at a kink-free point");
  add_arch_flags(grad, common);
  grad->add_option("--batch", check_opts.batch, "Batch size");
  grad->add_option("--input-dim", check_opts.input_dim, "Input dimension");
  grad->add_option("--step", check_opts.step, "Finite-difference step");
  grad->add_option("--coords", check_opts.coords, "Coordinates per tensor");

  auto* sym = app.add_subcommand("symmetry-check", "Loss invariance, gradient covariance and update equivariance");
  add_arch_flags(sym, common);
  sym->add_option("--batch", check_opts.batch, "Batch size");
  sym->add_option("--input-dim", check_opts.input_dim, "Input dimension");
  sym->add_option("--trials", check_opts.trials, "Random instances");
  sym->add_option("--min-scale", check_opts.lo, "Smallest scale factor");
  sym->add_option("--max-scale", check_opts.hi, "Largest scale factor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(common, train_opts);
    if (*experiment) return cmd_experiment(common, train_opts);
    if (*grad) {
      // gradient checks default to the small 4-filter network
      if (grad->count("--filters") == 0) common.filters = 4;
      return cmd_gradcheck(common, check_opts);
    }
    if (*sym) return cmd_symmetry(common, check_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
