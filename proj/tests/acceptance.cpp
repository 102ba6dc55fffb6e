// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails. Criterion 8 is reported but
// never fails the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "support.hpp"
#include "syminv/gradcheck.hpp"
#include "syminv/harness.hpp"
#include "syminv/mnist.hpp"
#include "syminv/optim.hpp"
#include "syminv/results.hpp"
#include "syminv/symmetry.hpp"

namespace {

using namespace syminv;
using syminv::testing::random_labels;
using syminv::testing::random_matrix;
using syminv::testing::random_positive;

struct Outcome {
  enum class Status { pass, fail, reported } status = Status::fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Outcome::Status::pass : Outcome::Status::fail, std::move(detail)};
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct Options {
  std::string data_dir;
  std::string cli;
  std::string out_dir = "acceptance_results";
  std::size_t repeats = 3;
  std::uint64_t seed = 2015;
  bool verbose = false;
};

ArchConfig paper_arch(std::size_t depth, bool bn) {
  ArchConfig a;
  a.depth = depth;
  a.use_batchnorm = bn;
  // batch-norm absorbs a row scaling exactly only as epsilon -> 0
  if (bn) a.bn_epsilon = 0.0;
  return a;
}

// 1. Loss and class probabilities unchanged under random group elements.
Outcome symmetry_invariance() {
  double worst_loss = 0.0, worst_prob = 0.0;
  std::size_t triples = 0;
  for (bool bn : {false, true}) {
    for (std::size_t depth : {2u, 4u}) {
      const auto a = paper_arch(depth, bn);
      for (std::uint64_t c = 0; c < 100; ++c) {
        const auto pt = sample_kink_free_point(a, 8, derive_seed(101, c * 8 + depth + bn, "point"), 0.0);
        const auto rep = random_reparam(a, derive_seed(101, c * 8 + depth + bn, "rep"), 0.1, 10.0);
        const auto r = check_loss_invariance(pt.params, a, rep, pt.inputs, pt.labels, Mode::train);
        worst_loss = std::max(worst_loss, r.loss_diff);
        worst_prob = std::max(worst_prob, r.max_prob_diff);
        ++triples;
      }
    }
  }
  return verdict(worst_loss < 1e-10 && worst_prob < 1e-10,
                 std::to_string(triples) + " triples, max |dL| " + sci(worst_loss) + ", max |dy| " +
                     sci(worst_prob) + " (bound 1e-10)");
}

// Not a criterion: how far the default epsilon is from exact invariance.
std::string default_epsilon_note() {
  ArchConfig a = paper_arch(2, true);
  a.bn_epsilon = 1e-5;
  double worst = 0.0;
  for (std::uint64_t c = 0; c < 20; ++c) {
    const auto pt = sample_kink_free_point(a, 8, derive_seed(102, c, "point"), 0.0);
    const auto rep = random_reparam(a, derive_seed(102, c, "rep"), 0.1, 10.0);
    worst = std::max(worst, check_loss_invariance(pt.params, a, rep, pt.inputs, pt.labels, Mode::train).loss_diff);
  }
  return "with bn_epsilon=1e-5 the Arch2 deviation is " + sci(worst);
}

// 2. Backprop against central differences, plus mutation sensitivity.
Outcome gradient_oracle() {
  double worst = 0.0, weakest_mutation = 1e300;
  bool coords_ok = true;
  for (bool bn : {false, true}) {
    for (std::size_t depth : {2u, 4u}) {
      ArchConfig a;
      a.depth = depth;
      a.filters = 4;
      a.use_batchnorm = bn;
      const auto pt = sample_kink_free_point(a, 8, derive_seed(201, depth, bn ? "bn" : "plain"), 1e-4);
      const auto fwd = forward(pt.params, a, pt.inputs, pt.labels, Mode::train);
      const auto good = backward(pt.params, a, fwd.cache, pt.labels);
      const GradcheckOptions opts{1e-5, 50, depth};
      const auto rep = gradcheck(pt.params, a, pt.inputs, pt.labels, good, opts);
      worst = std::max(worst, rep.max_rel_error);
      const auto views = gradient_tensors(good);
      for (std::size_t k = 0; k < rep.tensors.size(); ++k) {
        // at least 50 coordinates, or all of them for a smaller tensor
        if (rep.tensors[k].coords < std::min<std::size_t>(50, views[k].values.size())) coords_ok = false;
      }
      const auto n = gradient_tensors(good).size();
      for (std::size_t k = 0; k < n; ++k) {
        Gradients bad = good;
        for (double& v : gradient_tensors(bad)[k].values) v *= 1.01;
        weakest_mutation = std::min(weakest_mutation,
                                    gradcheck(pt.params, a, pt.inputs, pt.labels, bad, opts).max_rel_error);
      }
    }
  }
  return verdict(worst < 1e-6 && weakest_mutation > 1e-3 && coords_ok,
                 "max rel err " + sci(worst) + " (bound 1e-6); weakest x1.01 mutation " +
                     sci(weakest_mutation) + " (bound 1e-3)");
}

// 3. Per-row inverse scaling of Arch2 gradients.
Outcome gradient_scaling() {
  double worst = 0.0;
  for (std::size_t depth : {2u, 4u}) {
    const auto a = paper_arch(depth, true);
    for (std::uint64_t c = 0; c < 50; ++c) {
      const auto pt = sample_kink_free_point(a, 8, derive_seed(301, c * 4 + depth, "point"), 1e-6);
      const auto rep = random_reparam(a, derive_seed(301, c * 4 + depth, "rep"), 0.1, 10.0);
      const auto g = backward(pt.params, a, forward(pt.params, a, pt.inputs, pt.labels, Mode::train).cache, pt.labels);
      const auto q = apply_reparam(pt.params, a, rep);
      const auto gq = backward(q, a, forward(q, a, pt.inputs, pt.labels, Mode::train).cache, pt.labels);
      for (std::size_t l = 0; l < depth; ++l) {
        for (std::size_t i = 0; i < a.filters; ++i) {
          double num = 0.0, den = 0.0;
          for (std::size_t j = 0; j < g.weights[l].cols(); ++j) {
            const double want = g.weights[l](i, j) / rep.alpha[l][i];
            num += (gq.weights[l](i, j) - want) * (gq.weights[l](i, j) - want);
            den += want * want;
          }
          // a row with no gradient must stay without gradient
          worst = std::max(worst, den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? 1.0 : 0.0));
        }
      }
    }
  }
  return verdict(worst < 1e-10, "max per-row rel err " + sci(worst) + " (bound 1e-10)");
}

// 4. Scaled-metric equivariance, algebraic and along a trajectory.
Outcome sm_equivariance() {
  Rng rng(401);
  double left = 0.0, right = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const auto w = random_matrix(rng, 1 + rng.index(64), 1 + rng.index(64));
    const auto g = random_matrix(rng, w.rows(), w.cols());
    const double lr = rng.uniform(0.0, 1.0);
    auto a = random_positive(rng, w.rows()), ai = a;
    for (double& v : ai) v = 1.0 / v;
    left = std::max(left, relative_error(sm_update_left(scale_rows(w, a), scale_rows(g, ai), lr),
                                         scale_rows(sm_update_left(w, g, lr), a)));
    auto b = random_positive(rng, w.cols()), bi = b;
    for (double& v : bi) v = 1.0 / v;
    right = std::max(right, relative_error(sm_update_right(scale_cols(w, bi), scale_cols(g, b), lr),
                                           scale_cols(sm_update_right(w, g, lr), bi)));
  }

  const auto arch = paper_arch(2, true);
  double sm = 0.0, bsgd = 1e300;
  for (std::uint64_t c = 0; c < 10; ++c) {
    const auto pt = sample_kink_free_point(arch, 16, derive_seed(402, c, "point"), 0.0);
    const auto rep = random_reparam(arch, derive_seed(402, c, "rep"), 0.5, 2.0);
    Rng brng(derive_seed(402, c, "batches"));
    std::vector<Matrix> xs;
    std::vector<std::vector<int>> ys;
    for (int s = 0; s < 5; ++s) {
      Matrix x(16, arch.input_dim);
      for (double& v : x.data()) v = brng.uniform();
      xs.push_back(std::move(x));
      ys.push_back(random_labels(brng, 16));
    }
    sm = std::max(sm, check_trajectory_equivariance(pt.params, arch, rep, xs, ys, UpdateRule::sm, 0.1));
    bsgd = std::min(bsgd, check_trajectory_equivariance(pt.params, arch, rep, xs, ys, UpdateRule::bsgd, 0.1));
  }
  return verdict(left < 1e-12 && right < 1e-12 && sm < 1e-8 && bsgd > 1e-3,
                 "left " + sci(left) + ", right " + sci(right) + " (bound 1e-12); 5-step Arch2 SM " +
                     sci(sm) + " (bound 1e-8); B-SGD witness min " + sci(bsgd) + " (must exceed 1e-3)");
}

// 5. Unit-norm updates stay on the oblique manifold.
Outcome un_geometry() {
  Rng rng(501);
  auto w = orth_rows(random_matrix(rng, 64, 784));
  for (int s = 0; s < 1000; ++s) {
    const auto g = random_matrix(rng, 64, 784, std::exp(rng.uniform(-4.0, 2.0)));
    w = un_update(w, g, rng.uniform(0.0, 1.0));
  }
  double norm_err = 0.0;
  for (double d : diag_of_gram(w)) norm_err = std::max(norm_err, std::abs(std::sqrt(d) - 1.0));
  double tangency = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto p = un_project(w, random_matrix(rng, 64, 784));
    const auto pw = matmul_nt(p, w);
    for (std::size_t i = 0; i < 64; ++i) tangency = std::max(tangency, std::abs(pw(i, i)));
  }
  return verdict(norm_err < 1e-12 && tangency < 1e-13,
                 "after 1000 steps max |‖w‖-1| " + sci(norm_err) + " (bound 1e-12), tangency " +
                     sci(tangency) + " (bound 1e-13)");
}

// 6. Two `experiment` invocations with one master seed agree byte for byte.
Outcome protocol_determinism(const Options& o) {
  if (o.cli.empty()) return {Outcome::Status::fail, "no CLI binary given (--cli)"};
  const auto dir = std::filesystem::absolute(o.out_dir) / "determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "data");
  auto train = syminv::testing::blob_dataset(400, kMnistPixels, 61);
  auto test = syminv::testing::blob_dataset(100, kMnistPixels, 62);
  write_file_bytes(dir / "data" / "train-images-idx3-ubyte", serialize_idx_images(train.inputs));
  write_file_bytes(dir / "data" / "train-labels-idx1-ubyte", serialize_idx_labels(train.labels));
  write_file_bytes(dir / "data" / "t10k-images-idx3-ubyte.gz", serialize_idx_images(test.inputs));
  write_file_bytes(dir / "data" / "t10k-labels-idx1-ubyte.gz", serialize_idx_labels(test.labels));
  std::string outputs[2];
  for (int k = 0; k < 2; ++k) {
    const auto out = dir / ("run" + std::to_string(k));
    std::ostringstream cmd;
    cmd << '"' << o.cli << "\" experiment --quiet --batchnorm --seed 77 --rules sm,bsgd,un"
        << " --schedules bold,exp --repeats 2 --train-count 250 --val-count 100"
        << " --select-train 100 --select-val 50 --select-epochs 2 --min-epochs 2 --max-epochs 4"
        << " --data-dir \"" << (dir / "data").string() << "\" --out \"" << out.string() << "\" > \""
        << (dir / ("log" + std::to_string(k))).string() << "\" 2>&1";
    if (std::system(cmd.str().c_str()) != 0) return {Outcome::Status::fail, "experiment command failed: " + cmd.str()};
    outputs[k] = read_text(out / "summary.json");
  }
  const auto parsed = parse_summary_json(outputs[0]);
  return verdict(outputs[0] == outputs[1] && parsed.size() == 6,
                 std::to_string(outputs[0].size()) + "-byte summaries over " + std::to_string(parsed.size()) +
                     " configurations " + (outputs[0] == outputs[1] ? "identical" : "DIFFER"));
}

// 9. Exponential decay carries a single rounding error.
Outcome schedule_arithmetic() {
  double worst = 0.0;
  for (double base : {1e-2, 1e-3, 1e-4, 1e-5, 0.37}) {
    auto s = LrSchedule::make(ScheduleKind::exp_decay, base);
    long double exact = base;
    for (int e = 0; e <= 200; ++e) {
      if (e > 0) {
        s = exp_decay_step(s);
        exact *= 0.95L;
      }
      worst = std::max(worst, static_cast<double>(std::fabs((s.current_lr - exact) / exact)));
    }
  }
  // the rate recorded by a training run follows the same law
  ExperimentConfig c;
  c.arch = syminv::testing::small_arch(2, false, 8, 16);
  c.schedule = ScheduleKind::exp_decay;
  c.batch_size = 20;
  c.min_epochs = 1;
  c.max_epochs = 60;
  c.train_count = 60;
  c.val_count = 20;
  const ExperimentData data{syminv::testing::blob_dataset(100, 16, 91), syminv::testing::blob_dataset(20, 16, 92)};
  const auto run = run_training(c, data, 1e-3, 93);
  long double exact = 1e-3;
  for (const auto& e : run.epochs) {
    worst = std::max(worst, static_cast<double>(std::fabs((e.lr - exact) / exact)));
    exact *= 0.95L;
  }
  return verdict(worst < 1e-15 && run.epochs.size() == 60,
                 "max rel err of base*0.95^e " + sci(worst) + " (bound 1e-15), " +
                     std::to_string(run.epochs.size()) + "-epoch run");
}

struct MnistResults {
  std::map<std::string, ExperimentOutcome> by_key;
};

ExperimentOutcome run_mnist(const Options& o, const ExperimentData& data, UpdateRule rule,
                            ScheduleKind schedule, MnistResults& store) {
  const std::string key = std::string(to_string(rule)) + "_" + std::string(to_string(schedule));
  if (auto it = store.by_key.find(key); it != store.by_key.end()) return it->second;
  ExperimentConfig c;
  c.arch.depth = 2;
  c.arch.use_batchnorm = true;
  c.rule = rule;
  c.schedule = schedule;
  c.repeats = o.repeats;
  c.seed = o.seed;
  ProgressFn progress;
  if (o.verbose) progress = [&](const std::string& m) { std::fprintf(stderr, "  [%s] %s\n", key.c_str(), m.c_str()); };
  const auto t0 = std::chrono::steady_clock::now();
  auto out = run_experiment(c, data, progress);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "  arch2 d2 %s: mean %.4f std %.4f over %zu runs (%zu diverged), %.0fs\n", key.c_str(),
               out.summary.mean_test_err, out.summary.std_test_err, out.summary.n_runs, out.summary.n_diverged,
               secs);
  std::vector<ExperimentOutcome> all;
  store.by_key.emplace(key, out);
  for (const auto& [k, v] : store.by_key) all.push_back(v);
  emit_results(all, std::filesystem::path(o.out_dir) / "mnist");
  return out;
}

// 7. Desk-scale MNIST reproduction.
Outcome mnist_reproduction(const Options& o, const ExperimentData& data, MnistResults& store) {
  const auto sm = run_mnist(o, data, UpdateRule::sm, ScheduleKind::bold_driver, store).summary;
  auto bsgd = run_mnist(o, data, UpdateRule::bsgd, ScheduleKind::bold_driver, store).summary;
  std::string bsgd_note = "B-SGD bold " + fixed4(bsgd.mean_test_err);
  if (bsgd.mean_test_err > 0.035) {
    const auto alt = run_mnist(o, data, UpdateRule::bsgd, ScheduleKind::exp_decay, store).summary;
    bsgd_note += ", B-SGD exp " + fixed4(alt.mean_test_err);
    if (alt.mean_test_err < bsgd.mean_test_err) bsgd = alt;
  }
  return verdict(sm.mean_test_err <= 0.030 && bsgd.mean_test_err <= 0.035,
                 std::to_string(o.repeats) + " repeats: SM bold " + fixed4(sm.mean_test_err) + " ± " +
                     fixed4(sm.std_test_err) + " (bound 0.030); " + bsgd_note + " (bound 0.035)");
}

// 8. Soft ordering, reported only.
Outcome qualitative_ordering(const Options& o, const ExperimentData& data, MnistResults& store) {
  const double sm = run_mnist(o, data, UpdateRule::sm, ScheduleKind::bold_driver, store).summary.mean_test_err;
  const double un = run_mnist(o, data, UpdateRule::un, ScheduleKind::bold_driver, store).summary.mean_test_err;
  const double b = run_mnist(o, data, UpdateRule::bsgd, ScheduleKind::bold_driver, store).summary.mean_test_err;
  const bool holds = std::min(sm, un) <= b;
  Outcome out;
  out.status = holds ? Outcome::Status::pass : Outcome::Status::reported;
  out.detail = "bold driver means: SM " + fixed4(sm) + ", UN " + fixed4(un) + ", B-SGD " + fixed4(b) +
               (holds ? " (ordering holds)" : " (ordering deviates; reported, not failed)");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9};
  Options o;
  app.add_option("--criteria", criteria, "Criteria to run")->delimiter(',');
  app.add_option("--data-dir", o.data_dir, "MNIST directory (default: $MNIST_DATA_DIR or data/mnist)");
  app.add_option("--cli", o.cli, "Path of the syminv command-line tool");
  app.add_option("--out", o.out_dir, "Scratch and results directory");
  app.add_option("--repeats", o.repeats, "Repeats for the MNIST criteria");
  app.add_option("--seed", o.seed, "Master seed for the MNIST criteria");
  app.add_flag("--verbose", o.verbose, "Per-epoch progress for MNIST runs");
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::string> names{
      {1, "symmetry invariance"}, {2, "gradient oracle"},     {3, "gradient inverse scaling"},
      {4, "SM equivariance"},     {5, "UN geometry"},         {6, "protocol determinism"},
      {7, "MNIST reproduction"},  {8, "qualitative ordering"}, {9, "scheduler arithmetic"}};

  ExperimentData mnist;
  bool mnist_loaded = false;
  std::string mnist_error;
  MnistResults store;
  auto need_mnist = [&]() -> bool {
    if (mnist_loaded) return true;
    if (!mnist_error.empty()) return false;
    try {
      auto files = load_mnist(resolve_mnist_dir(o.data_dir));
      mnist = {std::move(files.train), std::move(files.test)};
      mnist_loaded = true;
    } catch (const std::exception& e) {
      mnist_error = e.what();
    }
    return mnist_loaded;
  };

  int failures = 0;
  for (int c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      switch (c) {
        case 1: out = symmetry_invariance(); out.detail += "; " + default_epsilon_note(); break;
        case 2: out = gradient_oracle(); break;
        case 3: out = gradient_scaling(); break;
        case 4: out = sm_equivariance(); break;
        case 5: out = un_geometry(); break;
        case 6: out = protocol_determinism(o); break;
        case 7: out = need_mnist() ? mnist_reproduction(o, mnist, store) : Outcome{Outcome::Status::fail, "MNIST unavailable: " + mnist_error}; break;
        case 8: out = need_mnist() ? qualitative_ordering(o, mnist, store) : Outcome{Outcome::Status::reported, "MNIST unavailable: " + mnist_error}; break;
        case 9: out = schedule_arithmetic(); break;
        default: out = {Outcome::Status::fail, "unknown criterion"};
      }
    } catch (const std::exception& e) {
      out = {Outcome::Status::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = out.status == Outcome::Status::pass ? "PASS" : out.status == Outcome::Status::fail ? "FAIL" : "NOTE";
    const auto name = names.count(c) ? names.at(c) : std::string("?");
    std::printf("[%s] criterion %d (%s): %s [%.1fs]\n", tag, c, name.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
    if (out.status == Outcome::Status::fail) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
