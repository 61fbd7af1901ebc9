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

// startup_fsl: command line front end for the experiment runner.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "startup/analysis.hpp"
#include "startup/error.hpp"
#include "startup/experiment.hpp"

namespace fs = std::filesystem;
using namespace startup;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> profile;
  std::optional<int> threads;
};

void add_common(CLI::App* app, CommonOptions& o, bool needs_config = true) {
  auto* c = app->add_option("--config", o.config, "experiment config file");
  if (needs_config) c->required()->check(CLI::ExistingFile);
  app->add_option("--out", o.out, "output directory (overrides output.dir)");
  app->add_option("--seed", o.seed, "experiment seed (overrides seed)");
  app->add_option("--profile", o.profile, "training profile")->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--threads", o.threads, "evaluation threads")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = load_config(o.config, o.profile);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

ModelBundle bundle_for(const ExperimentConfig& c, const std::string& bundle_path) {
  fs::path p = bundle_path.empty() ? c.output_dir / "teacher.bundle" : fs::path(bundle_path);
  return load_bundle(p);
}

std::vector<std::string> selected_targets(const ExperimentConfig& c, const std::string& only) {
  std::vector<std::string> out;
  if (!only.empty()) {
    c.target(only);
    out.push_back(only);
    return out;
  }
  for (const DomainSource& t : c.targets) {
    if (t.evaluate) out.push_back(t.name);
  }
  return out;
}

int cmd_train_teacher(const CommonOptions& o) {
  ExperimentConfig c = resolve(o);
  fs::create_directories(c.output_dir / "logs");
  PreparedData data = prepare_data(c);
  TrainingRun run = train_teacher(data.base, teacher_config(c));
  save_bundle(run.bundle, c.output_dir / "teacher.bundle");
  write_training_log(run.log, c.output_dir / "logs" / "teacher.csv");
  std::printf("teacher: lr %g, best epoch %d, val loss %.6f -> %s\n", run.lr_selection.learning_rate,
              run.best_epoch, run.best_val_loss, (c.output_dir / "teacher.bundle").c_str());
  return 0;
}

int cmd_run(const CommonOptions& o) {
  ExperimentConfig c = resolve(o);
  RunOutcome outcome = run_experiment(c);
  std::printf("%d cells completed, results in %s\n", outcome.cells_completed, outcome.output_dir.c_str());
  if (fs::exists(outcome.output_dir / "report.txt")) {
    std::ifstream in(outcome.output_dir / "report.txt");
    std::cout << in.rdbuf();
  }
  for (const std::string& f : outcome.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return outcome.failures.empty() ? 0 : 3;
}

int cmd_eval(const CommonOptions& o, const std::string& bundle_path, const std::string& method,
             const std::string& target) {
  ExperimentConfig c = resolve(o);
  ModelBundle bundle = bundle_for(c, bundle_path);
  PreparedData data = prepare_data(c);
  fs::path dir = c.output_dir / "eval";
  fs::create_directories(dir);
  std::ofstream f(dir / "results.csv");
  if (!f) throw IoError("cannot write '" + (dir / "results.csv").string() + "'");
  f << kResultsHeader << '\n';
  for (const std::string& name : selected_targets(c, target)) {
    const Dataset& pool = data.splits.at(name).eval_pool;
    for (int k : c.shots) {
      ResultSummary s = run_evaluation(bundle, pool, protocol_for(c, k), method, c.threads);
      for (int i = 0; i < s.n_episodes; ++i) {
        f << format_record({method, name, name, c.way, k, i,
                            s.per_episode_accuracy[static_cast<std::size_t>(i)], c.seed})
          << '\n';
      }
      std::printf("%s %s %d-way %d-shot: %.4f +- %.4f\n", method.c_str(), name.c_str(), c.way, k, s.mean,
                  s.ci_half_width);
    }
  }
  f.close();
  emit_report(dir);
  return 0;
}

int cmd_ami(const CommonOptions& o, const std::string& bundle_path) {
  ExperimentConfig c = resolve(o);
  ModelBundle bundle = bundle_for(c, bundle_path);
  PreparedData data = prepare_data(c);
  fs::create_directories(c.output_dir);
  std::ofstream f(c.output_dir / "ami.csv");
  if (!f) throw IoError("cannot write '" + (c.output_dir / "ami.csv").string() + "'");
  f << "target,n,ami,mutual_information,expected_mutual_information\n";
  f.precision(17);
  for (const DomainSource& t : c.targets) {
    const Dataset& d = data.full.at(t.name);
    Partition truth = make_partition(d.truth());
    ClusterAgreement a = cluster_agreement(induced_grouping(bundle, d), truth);
    f << t.name << ',' << d.size() << ',' << a.ami << ',' << a.mutual_information << ','
      << a.expected_mutual_information << '\n';
    std::printf("%s: AMI %.4f (MI %.4f, E[MI] %.4f)\n", t.name.c_str(), a.ami, a.mutual_information,
                a.expected_mutual_information);
  }
  return 0;
}

int cmd_export(const CommonOptions& o, const std::string& bundle_path, const std::string& target,
               const std::string& split) {
  ExperimentConfig c = resolve(o);
  ModelBundle bundle = bundle_for(c, bundle_path);
  PreparedData data = prepare_data(c);
  fs::create_directories(c.output_dir);
  for (const std::string& name : selected_targets(c, target)) {
    const Dataset* d = &data.full.at(name);
    if (split == "unlabeled") d = &data.splits.at(name).unlabeled;
    if (split == "eval") d = &data.splits.at(name).eval_pool;
    fs::path path = c.output_dir / ("embeddings_" + name + "_" + split + ".csv");
    export_embeddings(bundle, *d, path);
    std::printf("%s (%zu rows)\n", path.c_str(), d->size());
  }
  return 0;
}

int cmd_report(const std::string& dir) {
  Report r = emit_report(dir);
  std::cout << format_report(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STARTUP few-shot transfer experiments on synthetic and feature-file domains"};
  app.require_subcommand(1);

  CommonOptions train_opts, run_opts, eval_opts, ami_opts, export_opts;
  std::string bundle, method = "bundle", target, split = "full", report_dir;

  auto* train = app.add_subcommand("train-teacher", "train the teacher on the base domain");
  add_common(train, train_opts);

  auto* run = app.add_subcommand("run", "run the full method x target grid");
  add_common(run, run_opts);

  auto* eval = app.add_subcommand("eval", "evaluate a saved bundle on the target evaluation pools");
  add_common(eval, eval_opts);
  eval->add_option("--bundle", bundle, "bundle file (default <out>/teacher.bundle)");
  eval->add_option("--method", method, "method tag written to the results");
  eval->add_option("--target", target, "only this target");

  auto* ami = app.add_subcommand("ami", "AMI of the bundle's induced grouping against ground truth");
  add_common(ami, ami_opts);
  ami->add_option("--bundle", bundle, "bundle file (default <out>/teacher.bundle)");

  auto* exp = app.add_subcommand("export-embeddings", "write per-example embeddings");
  add_common(exp, export_opts);
  exp->add_option("--bundle", bundle, "bundle file (default <out>/teacher.bundle)");
  exp->add_option("--target", target, "only this target");
  exp->add_option("--split", split, "rows to export")->check(CLI::IsMember({"full", "unlabeled", "eval"}));

  auto* report = app.add_subcommand("report", "summary tables from a results directory");
  report->add_option("--out", report_dir, "results directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train_teacher(train_opts);
    if (*run) return cmd_run(run_opts);
    if (*eval) return cmd_eval(eval_opts, bundle, method, target);
    if (*ami) return cmd_ami(ami_opts, bundle);
    if (*exp) return cmd_export(export_opts, bundle, target, split);
    if (*report) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
