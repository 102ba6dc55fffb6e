#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "syminv/harness.hpp"

namespace syminv {

/// Column header of trajectory files.
inline constexpr const char* kTrajectoryHeader = "epoch,train_err,val_err,test_err,lr";
inline constexpr const char* kSummaryTableHeader =
    "arch,depth,rule,schedule,mean_test_err,std_test_err,n_runs,n_diverged";

/// Trajectory CSV with exactly the columns of kTrajectoryHeader. Reals are
/// written with 17 significant digits so parsing restores them exactly.
std::string trajectory_csv(const std::vector<EpochRecord>& epochs);
/// Fills epoch, the three error rates and lr; the loss fields stay zero.
std::vector<EpochRecord> parse_trajectory_csv(const std::string& text);

/// Per-epoch cross-entropy companion file: epoch,train_loss,val_loss,test_loss.
std::string loss_csv(const std::vector<EpochRecord>& epochs);

/// JSON array with one object per configuration, keys: arch, depth, rule,
/// schedule, mean_test_err, std_test_err, n_runs, n_diverged.
std::string summary_json(const std::vector<ExperimentSummary>& summaries);
std::vector<ExperimentSummary> parse_summary_json(const std::string& text);

std::string summary_table_csv(const std::vector<ExperimentSummary>& summaries);
std::vector<ExperimentSummary> parse_summary_table_csv(const std::string& text);

/// Per-run metadata (selected rate, termination, final error, wall time).
std::string runs_json(const std::vector<ExperimentOutcome>& outcomes);

/// Writes summary.json, summary.csv, runs.json and, per run,
/// <arch>_d<depth>_<rule>_<schedule>_run<k>.csv plus a matching *_loss.csv
/// into `dir` (created if missing). I/O failures throw with the path.
void emit_results(const std::vector<ExperimentOutcome>& outcomes, const std::filesystem::path& dir);

std::string run_file_stem(const ExperimentSummary& summary, std::size_t run_index);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace syminv
