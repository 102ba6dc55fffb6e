#include "syminv/results.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace syminv {
namespace {

using nlohmann::ordered_json;

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

double to_real(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

std::size_t to_count(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad count '" + s + "'");
  return static_cast<std::size_t>(v);
}

ordered_json summary_object(const ExperimentSummary& s) {
  ordered_json j;
  j["arch"] = s.arch;
  j["depth"] = s.depth;
  j["rule"] = s.rule;
  j["schedule"] = s.schedule;
  j["mean_test_err"] = s.mean_test_err;
  j["std_test_err"] = s.std_test_err;
  j["n_runs"] = s.n_runs;
  j["n_diverged"] = s.n_diverged;
  return j;
}

}  // namespace

std::string trajectory_csv(const std::vector<EpochRecord>& epochs) {
  std::string out = std::string(kTrajectoryHeader) + "\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + fmt_real(e.train_err) + "," + fmt_real(e.val_err) + "," +
           fmt_real(e.test_err) + "," + fmt_real(e.lr) + "\n";
  }
  return out;
}

std::vector<EpochRecord> parse_trajectory_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != kTrajectoryHeader) {
    throw std::invalid_argument("trajectory CSV must start with header '" + std::string(kTrajectoryHeader) + "'");
  }
  std::vector<EpochRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_line(lines[i]);
    if (f.size() != 5) throw std::invalid_argument("trajectory CSV line " + std::to_string(i + 1) + " needs 5 fields");
    EpochRecord r;
    r.epoch = to_count(f[0]);
    r.train_err = to_real(f[1]);
    r.val_err = to_real(f[2]);
    r.test_err = to_real(f[3]);
    r.lr = to_real(f[4]);
    out.push_back(r);
  }
  return out;
}

std::string loss_csv(const std::vector<EpochRecord>& epochs) {
  std::string out = "epoch,train_loss,val_loss,test_loss\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + fmt_real(e.train_loss) + "," + fmt_real(e.val_loss) +
           "," + fmt_real(e.test_loss) + "\n";
  }
  return out;
}

std::string summary_json(const std::vector<ExperimentSummary>& summaries) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : summaries) arr.push_back(summary_object(s));
  return arr.dump(2) + "\n";
}

std::vector<ExperimentSummary> parse_summary_json(const std::string& text) {
  const auto arr = ordered_json::parse(text);
  if (!arr.is_array()) throw std::invalid_argument("summary JSON must be an array");
  std::vector<ExperimentSummary> out;
  for (const auto& j : arr) {
    ExperimentSummary s;
    s.arch = j.at("arch").get<std::string>();
    s.depth = j.at("depth").get<std::size_t>();
    s.rule = j.at("rule").get<std::string>();
    s.schedule = j.at("schedule").get<std::string>();
    s.mean_test_err = j.at("mean_test_err").get<double>();
    s.std_test_err = j.at("std_test_err").get<double>();
    s.n_runs = j.at("n_runs").get<std::size_t>();
    s.n_diverged = j.at("n_diverged").get<std::size_t>();
    out.push_back(std::move(s));
  }
  return out;
}

std::string summary_table_csv(const std::vector<ExperimentSummary>& summaries) {
  std::string out = std::string(kSummaryTableHeader) + "\n";
  for (const auto& s : summaries) {
    out += s.arch + "," + std::to_string(s.depth) + "," + s.rule + "," + s.schedule + "," +
           fmt_real(s.mean_test_err) + "," + fmt_real(s.std_test_err) + "," +
           std::to_string(s.n_runs) + "," + std::to_string(s.n_diverged) + "\n";
  }
  return out;
}

std::vector<ExperimentSummary> parse_summary_table_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != kSummaryTableHeader) {
    throw std::invalid_argument("summary table must start with its header");
  }
  std::vector<ExperimentSummary> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_line(lines[i]);
    if (f.size() != 8) throw std::invalid_argument("summary table line " + std::to_string(i + 1) + " needs 8 fields");
    out.push_back({f[0], to_count(f[1]), f[2], f[3], to_real(f[4]), to_real(f[5]), to_count(f[6]),
                   to_count(f[7])});
  }
  return out;
}

std::string run_file_stem(const ExperimentSummary& s, std::size_t run_index) {
  return s.arch + "_d" + std::to_string(s.depth) + "_" + s.rule + "_" + s.schedule + "_run" +
         std::to_string(run_index + 1);
}

std::string runs_json(const std::vector<ExperimentOutcome>& outcomes) {
  ordered_json arr = ordered_json::array();
  for (const auto& o : outcomes) {
    for (std::size_t k = 0; k < o.runs.size(); ++k) {
      const auto& r = o.runs[k];
      ordered_json j;
      j["run"] = run_file_stem(o.summary, k);
      j["selected_lr"] = r.selected_lr;
      j["epochs"] = r.epochs.size();
      j["final_test_err"] = r.final_test_error;
      j["termination"] = std::string(to_string(r.termination));
      if (!r.detail.empty()) j["detail"] = r.detail;
      j["wall_seconds"] = r.wall_seconds;
      arr.push_back(std::move(j));
    }
  }
  return arr.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit_results(const std::vector<ExperimentOutcome>& outcomes, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  std::vector<ExperimentSummary> summaries;
  for (const auto& o : outcomes) summaries.push_back(o.summary);
  write_text(dir / "summary.json", summary_json(summaries));
  write_text(dir / "summary.csv", summary_table_csv(summaries));
  write_text(dir / "runs.json", runs_json(outcomes));
  for (const auto& o : outcomes) {
    for (std::size_t k = 0; k < o.runs.size(); ++k) {
      const auto stem = run_file_stem(o.summary, k);
      write_text(dir / (stem + ".csv"), trajectory_csv(o.runs[k].epochs));
      write_text(dir / (stem + "_loss.csv"), loss_csv(o.runs[k].epochs));
    }
  }
}

}  // namespace syminv
