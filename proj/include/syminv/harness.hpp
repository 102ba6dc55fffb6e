#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "syminv/mnist.hpp"
#include "syminv/network.hpp"
#include "syminv/optim.hpp"

namespace syminv {

enum class Termination { max_epochs, train_converged, val_worsened, val_plateau, diverged };

std::string_view to_string(Termination t);
Termination parse_termination(std::string_view name);

/// One line of a training trajectory. The *_err fields are misclassification
/// rates; the *_loss fields are mean cross-entropy per sample. Training
/// figures are accumulated over the epoch's mini-batches in train mode.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_err = 0.0;
  double val_err = 0.0;
  double test_err = 0.0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double test_loss = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct RunResult {
  double selected_lr = 0.0;
  std::vector<EpochRecord> epochs;
  double final_test_error = 0.0;
  Termination termination = Termination::max_epochs;
  std::string detail;  // why a run diverged, when it did
  double wall_seconds = 0.0;
  NetworkParams final_params;

  bool diverged() const noexcept { return termination == Termination::diverged; }
};

/// Learning rates follow the summed-loss convention: a step on a batch B
/// moves by lr * |B| times the gradient of the mean loss, which is lr times
/// the gradient of the summed loss.
struct ExperimentConfig {
  ArchConfig arch;
  UpdateRule rule = UpdateRule::sm;
  ScheduleKind schedule = ScheduleKind::bold_driver;
  std::vector<double> lr_candidates{1e-2, 1e-3, 1e-4, 1e-5};
  std::size_t batch_size = 100;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  std::size_t min_epochs = 25;
  std::size_t max_epochs = 60;

  std::size_t train_count = 50000;
  std::size_t val_count = 10000;
  std::size_t select_train_count = 1000;
  std::size_t select_val_count = 500;
  std::size_t select_epochs = 50;

  long double decay = 0.95L;
  double boost = 1.05;
  double cut = 0.5;

  double stop_tolerance = 1e-5;     // train-loss floor and validation plateau width
  std::size_t worsen_lag = 5;       // validation worsening compares with this many epochs earlier
  std::size_t divergence_grace = 5;  // epochs before the error-rate divergence test applies
  double divergence_error = 0.9;

  void validate() const;
};

/// The labelled pool that training/validation splits are drawn from, and the
/// held-out test set, which only ever feeds the reported test error.
struct ExperimentData {
  Dataset pool;
  Dataset test;
};

using ProgressFn = std::function<void(const std::string&)>;

struct CandidateScore {
  double lr = 0.0;
  double val_loss = 0.0;
  double val_err = 0.0;
  bool diverged = false;
};

struct LrSelection {
  double lr = 0.0;
  std::vector<CandidateScore> candidates;
};

/// Trains one fresh network per candidate on a seeded subset of
/// select_train_count pool images for select_epochs epochs and scores it by
/// mean cross-entropy on a disjoint subset of select_val_count images. The
/// lowest score wins, ties going to the smaller rate. Throws
/// std::runtime_error if every candidate diverges.
LrSelection select_learning_rate(const ExperimentConfig& config, const ExperimentData& data,
                                 std::uint64_t seed, const ProgressFn& progress = {});

/// Full training run on a seeded train_count / val_count split of the pool.
///
/// Exponential-decay runs train for max_epochs. Bold-driver runs stop, from
/// min_epochs on, when the training loss drops below stop_tolerance, when the
/// validation loss exceeds the one worsen_lag epochs earlier, or when two
/// successive validation losses differ by less than stop_tolerance. A run is
/// diverged when a loss goes non-finite, the update rule hits a degenerate
/// state, or the validation error exceeds divergence_error after
/// divergence_grace epochs.
RunResult run_training(const ExperimentConfig& config, const ExperimentData& data, double lr,
                       std::uint64_t seed, const ProgressFn& progress = {});

struct ExperimentSummary {
  std::string arch;  // "arch1" or "arch2"
  std::size_t depth = 0;
  std::string rule;
  std::string schedule;
  double mean_test_err = 0.0;
  double std_test_err = 0.0;  // sample standard deviation, 0 for a single run
  std::size_t n_runs = 0;      // repeats attempted
  std::size_t n_diverged = 0;  // repeats excluded from the statistics

  bool operator==(const ExperimentSummary&) const = default;
};

struct ExperimentOutcome {
  ExperimentSummary summary;
  std::vector<RunResult> runs;
};

/// Learning-rate selection plus a full run per repeat, each repeat on seeds
/// derived from (seed, repeat index, phase). Throws std::runtime_error when
/// every repeat diverges.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                 const ProgressFn& progress = {});

ExperimentSummary summarize(const ExperimentConfig& config, const std::vector<RunResult>& runs);

}  // namespace syminv
