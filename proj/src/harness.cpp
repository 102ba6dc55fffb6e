#include "syminv/harness.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "syminv/random.hpp"

namespace syminv {
namespace {

struct LoopSpec {
  const Dataset& train;
  const Dataset& val;
  const Dataset* test;
  std::size_t max_epochs;
  bool stopping_rules;
  double lr;
  std::uint64_t seed;
};

std::string format_epoch(const EpochRecord& r) {
  std::ostringstream os;
  os << "epoch " << r.epoch << " lr " << r.lr << " train_loss " << r.train_loss << " train_err "
     << r.train_err << " val_loss " << r.val_loss << " val_err " << r.val_err;
  if (r.test_err >= 0.0) os << " test_err " << r.test_err;
  return os.str();
}

RunResult train_loop(const ExperimentConfig& config, const LoopSpec& spec,
                     const ProgressFn& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const ArchConfig& arch = config.arch;
  RunResult result;
  result.selected_lr = spec.lr;
  result.termination = Termination::max_epochs;

  NetworkParams params = init_params(arch, derive_seed(spec.seed, 0, "init"));
  LrSchedule schedule =
      LrSchedule::make(config.schedule, spec.lr, config.decay, config.boost, config.cut);
  double prev_val_loss = evaluate(params, arch, spec.val.inputs, spec.val.labels).mean_loss;

  auto finish = [&](Termination t, std::string detail = {}) {
    result.termination = t;
    result.detail = std::move(detail);
  };

  for (std::size_t epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = schedule.current_lr;

    auto batches = epoch_batches(spec.train.size(), config.batch_size,
                                 derive_seed(spec.seed, epoch, "epoch"));
    // a batch-norm layer cannot normalise a single sample
    if (arch.use_batchnorm && batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back().front());
      batches.pop_back();
    }

    double loss_sum = 0.0;
    std::size_t errors = 0;
    bool broken = false;
    for (const auto& idx : batches) {
      const Dataset batch = spec.train.subset(idx);
      const auto fwd = forward(params, arch, batch.inputs, batch.labels, Mode::train);
      if (!std::isfinite(fwd.loss)) {
        finish(Termination::diverged, "non-finite training loss in epoch " + std::to_string(epoch));
        broken = true;
        break;
      }
      loss_sum += fwd.loss * static_cast<double>(idx.size());
      errors += count_errors(fwd.probs, batch.labels);
      const auto grads = backward(params, arch, fwd.cache, batch.labels);
      update_running_stats(params, arch, fwd.cache);
      try {
        // rates are per summed mini-batch loss; grads are of the mean
        params = apply_rule(params, grads, config.rule,
                            schedule.current_lr * static_cast<double>(idx.size()));
      } catch (const std::domain_error& e) {
        finish(Termination::diverged, e.what());
        broken = true;
        break;
      }
    }
    if (broken) break;

    const double n = static_cast<double>(spec.train.size());
    rec.train_loss = loss_sum / n;
    rec.train_err = static_cast<double>(errors) / n;
    const auto val = evaluate(params, arch, spec.val.inputs, spec.val.labels);
    rec.val_loss = val.mean_loss;
    rec.val_err = val.error_rate;
    if (spec.test != nullptr) {
      const auto test = evaluate(params, arch, spec.test->inputs, spec.test->labels);
      rec.test_loss = test.mean_loss;
      rec.test_err = test.error_rate;
    } else {
      rec.test_loss = rec.test_err = -1.0;
    }
    result.epochs.push_back(rec);
    if (progress) progress(format_epoch(rec));

    if (!std::isfinite(rec.val_loss) || !std::isfinite(rec.train_loss)) {
      finish(Termination::diverged, "non-finite loss after epoch " + std::to_string(epoch));
      break;
    }
    if (epoch > config.divergence_grace && rec.val_err > config.divergence_error) {
      finish(Termination::diverged, "validation error " + std::to_string(rec.val_err) +
                                        " after epoch " + std::to_string(epoch));
      break;
    }

    if (spec.stopping_rules && epoch >= config.min_epochs) {
      const auto& e = result.epochs;
      if (rec.train_loss < config.stop_tolerance) {
        finish(Termination::train_converged);
        break;
      }
      if (e.size() > config.worsen_lag && rec.val_loss > e[e.size() - 1 - config.worsen_lag].val_loss) {
        finish(Termination::val_worsened);
        break;
      }
      if (e.size() > 1 && std::abs(rec.val_loss - e[e.size() - 2].val_loss) < config.stop_tolerance) {
        finish(Termination::val_plateau);
        break;
      }
    }

    if (config.schedule == ScheduleKind::exp_decay) {
      schedule = exp_decay_step(schedule);
    } else {
      schedule = bold_driver_step(schedule, prev_val_loss, rec.val_loss);
    }
    prev_val_loss = rec.val_loss;
  }

  result.final_test_error = result.epochs.empty() ? 1.0 : result.epochs.back().test_err;
  result.final_params = std::move(params);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::max_epochs: return "max-epochs";
    case Termination::train_converged: return "train-converged";
    case Termination::val_worsened: return "val-worsened";
    case Termination::val_plateau: return "val-plateau";
    case Termination::diverged: return "diverged";
  }
  return "?";
}

Termination parse_termination(std::string_view name) {
  for (auto t : {Termination::max_epochs, Termination::train_converged, Termination::val_worsened,
                 Termination::val_plateau, Termination::diverged}) {
    if (to_string(t) == name) return t;
  }
  throw std::invalid_argument("unknown termination reason '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  arch.validate();
  if (lr_candidates.empty()) throw std::invalid_argument("at least one learning-rate candidate is required");
  for (double lr : lr_candidates)
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning-rate candidates must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
  if (min_epochs > max_epochs) throw std::invalid_argument("min_epochs exceeds max_epochs");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be >= 1");
  if (arch.use_batchnorm && (batch_size < 2 || train_count < 2 || select_train_count < 2)) {
    throw std::invalid_argument("batch-norm training needs batches of at least two samples");
  }
}

LrSelection select_learning_rate(const ExperimentConfig& config, const ExperimentData& data,
                                 std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  const auto [train_idx, val_idx] = split_indices(
      data.pool.size(),
      SplitSpec{config.select_train_count, config.select_val_count, derive_seed(seed, 0, "subset")});
  const Dataset train = data.pool.subset(train_idx);
  const Dataset val = data.pool.subset(val_idx);

  LrSelection sel;
  bool found = false;
  double best = std::numeric_limits<double>::infinity();
  for (double lr : config.lr_candidates) {
    const LoopSpec spec{train, val, nullptr, config.select_epochs, false, lr,
                        derive_seed(seed, 0, "candidate")};
    const auto run = train_loop(config, spec, {});
    CandidateScore score{lr, std::numeric_limits<double>::infinity(), 1.0, run.diverged()};
    if (!run.epochs.empty()) {
      score.val_loss = run.epochs.back().val_loss;
      score.val_err = run.epochs.back().val_err;
    }
    if (progress) {
      std::ostringstream os;
      os << "lr candidate " << lr << ": val_loss " << score.val_loss << " val_err " << score.val_err
         << (score.diverged ? " (diverged)" : "");
      progress(os.str());
    }
    if (!score.diverged &&
        (score.val_loss < best || (score.val_loss == best && lr < sel.lr))) {
      best = score.val_loss;
      sel.lr = lr;
      found = true;
    }
    sel.candidates.push_back(score);
  }
  if (!found) throw std::runtime_error("learning-rate selection: every candidate diverged");
  return sel;
}

RunResult run_training(const ExperimentConfig& config, const ExperimentData& data, double lr,
                       std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("run_training: invalid learning rate");
  const auto [train, val] =
      split(data.pool, SplitSpec{config.train_count, config.val_count, derive_seed(seed, 0, "split")});
  const bool stopping = config.schedule == ScheduleKind::bold_driver;
  const LoopSpec spec{train, val, &data.test, config.max_epochs, stopping, lr, seed};
  return train_loop(config, spec, progress);
}

ExperimentSummary summarize(const ExperimentConfig& config, const std::vector<RunResult>& runs) {
  ExperimentSummary s;
  s.arch = config.arch.use_batchnorm ? "arch2" : "arch1";
  s.depth = config.arch.depth;
  s.rule = std::string(to_string(config.rule));
  s.schedule = std::string(to_string(config.schedule));
  s.n_runs = runs.size();
  std::vector<double> errs;
  for (const auto& r : runs) {
    if (r.diverged()) {
      ++s.n_diverged;
    } else {
      errs.push_back(r.final_test_error);
    }
  }
  if (errs.empty()) return s;
  double sum = 0.0;
  for (double e : errs) sum += e;
  s.mean_test_err = sum / static_cast<double>(errs.size());
  if (errs.size() > 1) {
    double ss = 0.0;
    for (double e : errs) ss += (e - s.mean_test_err) * (e - s.mean_test_err);
    s.std_test_err = std::sqrt(ss / static_cast<double>(errs.size() - 1));
  }
  return s;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                 const ProgressFn& progress) {
  config.validate();
  ExperimentOutcome out;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    auto tagged = [&](const std::string& msg) {
      if (progress) progress("[repeat " + std::to_string(r + 1) + "/" + std::to_string(config.repeats) + "] " + msg);
    };
    RunResult run;
    try {
      const auto sel = select_learning_rate(config, data, derive_seed(config.seed, r, "select"), tagged);
      tagged("selected lr " + std::to_string(sel.lr));
      run = run_training(config, data, sel.lr, derive_seed(config.seed, r, "train"), tagged);
    } catch (const std::runtime_error& e) {
      run.termination = Termination::diverged;
      run.detail = e.what();
      run.final_test_error = 1.0;
    }
    tagged("finished: " + std::string(to_string(run.termination)) +
           " test_err " + std::to_string(run.final_test_error));
    out.runs.push_back(std::move(run));
  }
  out.summary = summarize(config, out.runs);
  if (out.summary.n_diverged == out.summary.n_runs) {
    throw std::runtime_error("experiment: every run diverged");
  }
  return out;
}

}  // namespace syminv
