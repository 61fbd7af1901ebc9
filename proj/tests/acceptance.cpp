// Copyright 2026 The startup-fsl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Acceptance checks: one line per criterion, non-zero exit when any fails.
// Usage: startup_acceptance <work_dir> <cli_path> [criterion ...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "startup/analysis.hpp"
#include "startup/error.hpp"
#include "startup/experiment.hpp"
#include "startup/fewshot_eval.hpp"
#include "startup/losses.hpp"
#include "startup/pipeline.hpp"
#include "support/gradcheck_suite.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace startup;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path g_work;
std::string g_cli;

// Shared synthetic benchmark: 20 base classes in 64 dimensions, 10-class
// targets with 400 examples per class, 5-way tasks over 600 episodes.
std::string benchmark_header(std::uint64_t seed) {
  return "seed = " + std::to_string(seed) +
         "\n"
         "base.classes = 20\n"
         "base.per_class = 100\n"
         "base.dim = 64\n"
         "base.scale = 4\n"
         "base.sigma = 1\n"
         "base.basis_count = 20\n"
         "unlabeled.fraction = 0.2\n"
         "train.epochs = 100\n"
         "eval.way = 5\n"
         "eval.shots = 1\n"
         "eval.query = 15\n"
         "eval.episodes = 600\n";
}

std::string target_block(const std::string& name, double alpha, bool evaluate = true) {
  std::string p = "target." + name + ".";
  return p + "classes = 10\n" + p + "per_class = 400\n" + p + "alpha = " + fixed(alpha, 2) + "\n" +
         (evaluate ? "" : p + "evaluate = false\n");
}

RunOutcome run_text(const std::string& text, const std::string& dir_name) {
  ExperimentConfig c = parse_config(text);
  c.output_dir = g_work / dir_name;
  fs::remove_all(c.output_dir);
  c.validate();
  RunOutcome out = run_experiment(c);
  if (!out.failures.empty()) throw Error("run '" + dir_name + "' failed: " + out.failures.front());
  return out;
}

// ------------------------------------------------------------------ 1

Outcome gradients() {
  auto results = gradcheck::run(100, 20260101, 1e-5);
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (const auto& r : results) {
    checked += r.checked;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.name;
    }
  }
  return {worst < 1e-4, std::to_string(results.size()) + " cases x 100 instances, " + std::to_string(checked) +
                            " entries, max rel err " + sci(worst) + " (" + worst_name + ")"};
}

// ------------------------------------------------------------------ 2

Outcome loss_oracles() {
  std::mt19937_64 rng(2);
  double nt_err = 0.0;
  for (int t = 0; t < 50; ++t) {
    Index n = std::uniform_int_distribution<Index>(1, 8)(rng);
    Index d = std::uniform_int_distribution<Index>(2, 8)(rng);
    double tau = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    Matrix a = gradcheck::uniform(rng, n, d), b = gradcheck::uniform(rng, n, d);
    for (Index i = 0; i < n; ++i) {
      a.row(i).normalize();
      b.row(i).normalize();
    }
    PairedBatch batch = make_paired_batch(a, b);
    nt_err = std::max(nt_err, std::abs(nt_xent(batch, tau) - oracle::nt_xent(batch.projections, tau)));
  }
  bool kl_ok = true;
  double onehot_err = 0.0;
  for (int t = 0; t < 200; ++t) {
    Index n = 1 + t % 6, c = 2 + t % 5;
    auto probs = [&] {
      Matrix p = gradcheck::uniform(rng, n, c, 0.01, 1.0);
      for (Index i = 0; i < n; ++i) p.row(i) /= p.row(i).sum();
      return p;
    };
    Matrix p = probs(), q = probs();
    kl_ok = kl_ok && kl_soft(p, q) > 0.0 && std::abs(kl_soft(p, p)) < 1e-15;
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int& l : y) l = std::uniform_int_distribution<int>(0, static_cast<int>(c) - 1)(rng);
    onehot_err = std::max(onehot_err, std::abs(kl_soft(p, one_hot(y, c)) - cross_entropy(p, y)));
  }
  bool pass = nt_err < 1e-10 && kl_ok && onehot_err < 1e-10;
  return {pass, "nt_xent err " + sci(nt_err) + " over 50 batches; KL >= 0, zero iff equal: " +
                    (kl_ok ? "yes" : "no") + "; one-hot KL vs CE err " + sci(onehot_err)};
}

// ------------------------------------------------------------------ 3

Outcome ami_oracle() {
  std::mt19937_64 rng(3);
  double err = 0.0, self_err = 0.0, sym_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    int n = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<int> u = oracle::random_partition(rng, n, std::uniform_int_distribution<int>(1, 6)(rng));
    std::vector<int> v = oracle::random_partition(rng, n, std::uniform_int_distribution<int>(1, 6)(rng));
    Partition pu = make_partition(u), pv = make_partition(v);
    double uv = adjusted_mutual_information(pu, pv);
    err = std::max(err, std::abs(uv - oracle::ami(u, v)));
    sym_err = std::max(sym_err, std::abs(uv - adjusted_mutual_information(pv, pu)));
    // AMI(u,u) is defined when u has two or more clusters and is not all
    // singletons; otherwise MI equals its expectation.
    std::set<int> distinct(u.begin(), u.end());
    if (distinct.size() > 1 && distinct.size() < u.size()) self_err = std::max(self_err, std::abs(adjusted_mutual_information(pu, pu) - 1.0));
  }
  double total = 0.0;
  for (int t = 0; t < 200; ++t) {
    total += std::abs(adjusted_mutual_information(make_partition(oracle::random_partition(rng, 1000, 5)),
                                                  make_partition(oracle::random_partition(rng, 1000, 5))));
  }
  double mean_abs = total / 200;
  bool pass = err < 1e-9 && self_err < 1e-12 && sym_err < 1e-12 && mean_abs < 0.02;
  return {pass, "oracle err " + sci(err) + ", |AMI(u,u)-1| " + sci(self_err) + ", asymmetry " + sci(sym_err) +
                    ", random mean |AMI| " + fixed(mean_abs, 5)};
}

// ------------------------------------------------------------------ 4

Outcome protocol_statistics() {
  std::vector<double> alt(600);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = static_cast<double>(i % 2);
  double mean, ci;
  summarize(alt, mean, ci);
  bool ci_ok = std::abs(ci - 0.04004) < 1e-5 && mean == 0.5;

  ResultSummary a;
  a.per_episode_accuracy = {0.2, 0.6, 0.8, 0.4, 1.0};
  a.protocol_fingerprint = 7;
  Comparison self = compare(a, a);
  bool self_ok = self.t_statistic == 0.0 && self.p_value == 1.0 && !self.significant;

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> base(0.3, 0.9);
  std::normal_distribution<double> shift(0.02, 0.1);
  int detected = 0;
  for (int repeat = 0; repeat < 100; ++repeat) {
    std::vector<double> x(600), y(600);
    for (std::size_t i = 0; i < 600; ++i) {
      y[i] = base(rng);
      x[i] = y[i] + shift(rng);
    }
    detected += paired_t_test(x, y).p_value < 0.05;
  }
  bool pass = ci_ok && self_ok && detected >= 95;
  return {pass, "CI(alternating 0/1 x 600) = " + fixed(ci, 6) + "; compare(a,a) = (t " + fixed(self.t_statistic, 1) +
                    ", p " + fixed(self.p_value, 1) + "); power " + std::to_string(detected) + "/100"};
}

// ---------------------------------------------------------------- 5, 6

struct AlignedRun {
  bool done = false;
  std::string error;
  Report report;
  double seconds = 0.0;
};

AlignedRun& aligned_run() {
  static AlignedRun run;
  if (run.done) return run;
  run.done = true;
  auto start = std::chrono::steady_clock::now();
  try {
    std::string text = benchmark_header(0) + target_block("aligned", 0.9) + target_block("unrelated", 0.0, false) +
                       "methods = transfer, startup\n"
                       "mismatch.pairs = aligned <- unrelated\n";
    RunOutcome out = run_text(text, "aligned");
    run.report = build_report(read_results(out.output_dir / "results.csv"));
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

double pair_p(const ReportTable& t, const std::string& a, const std::string& b) {
  auto it = t.p_values.find(a < b ? a + "|" + b : b + "|" + a);
  return it == t.p_values.end() ? 1.0 : it->second;
}

Outcome startup_beats_transfer() {
  AlignedRun& run = aligned_run();
  if (!run.error.empty()) return {false, run.error};
  const ReportTable* t = run.report.find("aligned", 1);
  const ReportRow* tr = run.report.row("aligned", 1, "transfer");
  const ReportRow* st = run.report.row("aligned", 1, "startup");
  if (!t || !tr || !st) return {false, "missing report rows"};
  double gain = 100.0 * (st->mean - tr->mean);
  double p = pair_p(*t, "startup", "transfer");
  return {gain >= 2.0 && p < 0.05, "transfer " + fixed(tr->mean) + ", startup " + fixed(st->mean) + ", gain " +
                                       fixed(gain, 2) + " points, paired p " + sci(p) + ", run " +
                                       fixed(run.seconds, 1) + " s"};
}

Outcome mismatched_unlabeled() {
  AlignedRun& run = aligned_run();
  if (!run.error.empty()) return {false, run.error};
  const ReportTable* t = run.report.find("aligned", 1);
  const ReportRow* tr = run.report.row("aligned", 1, "transfer");
  const ReportRow* mis = run.report.row("aligned", 1, "startup[unrelated]");
  if (!t || !tr || !mis) return {false, "missing report rows"};
  double gain = 100.0 * (mis->mean - tr->mean);
  return {gain < 2.0, "transfer " + fixed(tr->mean) + ", startup with unrelated unlabeled data " + fixed(mis->mean) +
                          ", gain " + fixed(gain, 2) + " points, paired p " +
                          sci(pair_p(*t, "startup[unrelated]", "transfer"))};
}

// ------------------------------------------------------------------ 7

Outcome unlabeled_amount_trend() {
  const std::vector<double> fractions{0.05, 0.1, 0.2, 0.4};
  std::vector<double> averaged(fractions.size(), 0.0);
  std::string per_seed;
  for (std::uint64_t seed : {0, 1, 2}) {
    std::string text = benchmark_header(seed) + target_block("aligned", 0.9) +
                       "methods = transfer\n"
                       "sweep.fractions = 0.05, 0.1, 0.2, 0.4\n"
                       "sweep.target = aligned\n"
                       "sweep.method = startup\n";
    RunOutcome out = run_text(text, "sweep_seed" + std::to_string(seed));
    Report r = build_report(read_results(out.output_dir / "results.csv"));
    std::vector<double> means;
    for (double f : fractions) {
      std::ostringstream label;
      label << "startup[aligned@" << f << "]";
      const ReportRow* row = r.row("aligned/sweep", 1, label.str());
      if (!row) return {false, "missing sweep row " + label.str()};
      means.push_back(row->mean);
    }
    for (std::size_t i = 0; i < means.size(); ++i) averaged[i] += means[i] / 3.0;
    per_seed += " seed " + std::to_string(seed) + ": rho " + fixed(oracle::spearman(fractions, means), 2) + ";";
  }
  double rho = oracle::spearman(fractions, averaged);
  std::string means_text;
  for (double m : averaged) means_text += (means_text.empty() ? "" : ", ") + fixed(m);
  return {rho >= 0.8, "seed-averaged means [" + means_text + "], rho " + fixed(rho, 2) + " (" +
                          per_seed.substr(1, per_seed.size() - 2) + ")"};
}

// ------------------------------------------------------------------ 8

Outcome ami_tracks_gain() {
  std::string text = benchmark_header(0) + target_block("a00", 0.0) + target_block("a05", 0.5) +
                     target_block("a09", 0.9) + "methods = transfer, startup\n";
  RunOutcome out = run_text(text, "alpha_grid");
  Report r = build_report(read_results(out.output_dir / "results.csv"));
  std::map<std::string, double> ami;
  std::ifstream in(out.output_dir / "ami.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream s(line);
    std::string name, n, value;
    std::getline(s, name, ',');
    std::getline(s, n, ',');
    std::getline(s, value, ',');
    ami[name] = std::stod(value);
  }
  const std::vector<std::string> names{"a00", "a05", "a09"};
  std::vector<double> gains;
  for (const std::string& name : names) {
    const ReportRow* tr = r.row(name, 1, "transfer");
    const ReportRow* st = r.row(name, 1, "startup");
    if (!tr || !st || !ami.count(name)) return {false, "missing results for " + name};
    gains.push_back(100.0 * (st->mean - tr->mean));
  }
  bool increasing = ami["a00"] < ami["a05"] && ami["a05"] < ami["a09"];
  std::size_t top_ami = 0, top_gain = 0;
  for (std::size_t i = 1; i < names.size(); ++i) {
    if (ami[names[i]] > ami[names[top_ami]]) top_ami = i;
    if (gains[i] > gains[top_gain]) top_gain = i;
  }
  std::string detail;
  for (std::size_t i = 0; i < names.size(); ++i) {
    detail += (i ? "; " : "") + names[i] + ": AMI " + fixed(ami[names[i]], 3) + ", gain " + fixed(gains[i], 2);
  }
  return {increasing && top_ami == top_gain, detail};
}

// ------------------------------------------------------------------ 9

Outcome variant_algebra() {
  ExperimentConfig c = parse_config(
      "base.classes = 6\nbase.per_class = 40\nbase.dim = 12\nbase.basis_count = 6\n"
      "target.t.classes = 5\ntarget.t.per_class = 40\ntarget.t.alpha = 0.5\n"
      "train.epochs = 4\ntrain.teacher_epochs = 5\ntrain.batch_size_base = 16\n"
      "train.batch_size_unlabeled = 16\ntrain.hidden_dims = 16\ntrain.embed_dim = 8\n"
      "train.proj_hidden_dim = 8\ntrain.proj_dim = 4\nunlabeled.fraction = 0.4\noutput.dir = unused\n");
  PreparedData data = prepare_data(c);
  ModelBundle teacher = train_teacher(data.base, teacher_config(c)).bundle;
  const Dataset& unlabeled = data.splits.at("t").unlabeled;
  SoftLabeledSet soft = pseudo_label(teacher, unlabeled, c.train.soft_label_temperature);

  TrainConfig no_ss = student_config(c, method_spec("startup_no_ss"));
  TrainConfig zero_w3 = student_config(c, method_spec("startup"));
  zero_w3.term_weights.contrastive = 0.0;
  TrainingRun a = train_student(data.base, soft, unlabeled, teacher, no_ss);
  TrainingRun b = train_student(data.base, soft, unlabeled, teacher, zero_w3);
  bool same_trajectory = a.bundle == b.bundle && a.log.size() == b.log.size();
  for (std::size_t i = 0; same_trajectory && i < a.log.size(); ++i) {
    same_trajectory = a.log[i].train_loss == b.log[i].train_loss && a.log[i].val_loss == b.log[i].val_loss;
  }

  TrainConfig ft = student_config(c, method_spec("finetune"));
  TrainingRun f1 = train_student(data.base, soft, unlabeled, teacher, ft);
  Dataset other_base = data.base;
  other_base.features.setRandom();
  TrainingRun f2 = train_student(other_base, soft, unlabeled, teacher, ft);
  bool finetune_ok = ft.term_weights.cross_entropy == 0.0 && f1.bundle == f2.bundle;

  TrainConfig full = student_config(c, method_spec("startup_t"));
  full.epochs = 0;
  TrainingRun z = train_student(data.base, soft, unlabeled, teacher, full);
  double err = (classify(z.bundle, embed(z.bundle, unlabeled.features), c.train.soft_label_temperature) -
                soft.targets).cwiseAbs().maxCoeff();
  return {same_trajectory && finetune_ok && err <= 1e-12,
          std::string("startup_no_ss == startup with w3 = 0: ") + (same_trajectory ? "identical" : "differs") +
              "; finetune independent of base data: " + (finetune_ok ? "yes" : "no") +
              "; full_teacher zero-epoch pseudo-label err " + sci(err)};
}

// ----------------------------------------------------------------- 10

Outcome determinism() {
  fs::path cfg = g_work / "determinism.cfg";
  {
    std::ofstream out(cfg);
    out << "seed = 5\n"
           "base.classes = 10\nbase.per_class = 60\nbase.dim = 32\nbase.basis_count = 10\n"
           "target.near.classes = 8\ntarget.near.per_class = 80\ntarget.near.alpha = 0.9\n"
           "target.far.classes = 8\ntarget.far.per_class = 80\ntarget.far.alpha = 0.0\n"
           "methods = transfer, simclr_only, transfer_plus_simclr, startup, startup_no_ss, startup_t, "
           "startup_rand, finetune\n"
           "train.epochs = 5\ntrain.teacher_epochs = 10\n"
           "eval.shots = 1, 5\neval.episodes = 100\nmismatch.pairs = near <- far\n"
           "sweep.fractions = 0.1, 0.2\nsweep.target = near\n";
  }
  std::vector<std::string> outputs;
  for (const char* name : {"determinism_a", "determinism_b"}) {
    fs::path dir = g_work / name;
    fs::remove_all(dir);
    std::string cmd = "\"" + g_cli + "\" run --config \"" + cfg.string() + "\" --out \"" + dir.string() +
                      "\" > \"" + (g_work / (std::string(name) + ".log")).string() + "\" 2>&1";
    int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, std::string("cli run exited with ") + std::to_string(rc) + " for " + name};
    outputs.push_back(slurp(dir / "results.csv"));
  }
  std::size_t lines = static_cast<std::size_t>(std::count(outputs[0].begin(), outputs[0].end(), '\n'));
  bool same = !outputs[0].empty() && outputs[0] == outputs[1];
  return {same, "two CLI runs, results.csv " + std::to_string(lines) + " lines, " +
                    (same ? "byte-identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <work_dir> <cli_path> [criterion ...]\n", argv[0]);
    return 2;
  }
  g_work = argv[1];
  g_cli = argv[2];
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"loss oracles", loss_oracles},
      {"AMI oracle", ami_oracle},
      {"protocol statistics", protocol_statistics},
      {"STARTUP beats Transfer on the aligned target", startup_beats_transfer},
      {"mismatched unlabeled data gives no gain", mismatched_unlabeled},
      {"more unlabeled data helps", unlabeled_amount_trend},
      {"AMI tracks the STARTUP gain", ami_tracks_gain},
      {"variant algebra", variant_algebra},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (id == 1 && secs >= 30.0) {
      o.pass = false;
      o.detail += "; over the 30 s budget";
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
