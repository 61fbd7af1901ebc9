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

// Config-driven experiment grid: one teacher per base domain, every method on
// every target, shared evaluation episodes, and the report built from the
// per-episode results file.

#ifndef STARTUP_EXPERIMENT_HPP_
#define STARTUP_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "startup/datagen.hpp"
#include "startup/fewshot_eval.hpp"
#include "startup/pipeline.hpp"

namespace startup {

struct MethodSpec {
  std::string name;
  bool trains_student = true;
  TermWeights weights;
  InitStrategy init = InitStrategy::kTeacherEmbeddingRandomClassifier;
};

const std::vector<std::string>& known_methods();
// ConfigError for names outside known_methods().
MethodSpec method_spec(const std::string& name);

struct DomainSource {
  std::string name;
  DomainSpec spec;
  std::optional<std::filesystem::path> path;  // load instead of generating
  bool evaluate = true;                       // part of the main grid
};

struct MismatchPair {
  std::string target;            // evaluation pool
  std::string unlabeled_source;  // where the student's unlabeled data comes from
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string profile = "desk";
  DomainSource base;
  std::vector<DomainSource> targets;
  double unlabeled_fraction = 0.2;
  std::vector<std::string> methods{"transfer", "startup"};
  TrainConfig train;
  int way = 5;
  std::vector<int> shots{1};
  int query_per_class = 15;
  int episodes = 600;
  std::optional<std::uint64_t> eval_seed;  // derived from seed when absent
  ProbeConfig probe;
  std::vector<MismatchPair> mismatch;
  std::vector<double> sweep_fractions;
  std::string sweep_target;  // defaults to the first evaluated target
  std::string sweep_method = "startup";
  std::filesystem::path output_dir;
  bool save_datasets = false;
  int threads = 1;

  // ConfigError listing every invalid field.
  void validate() const;
  bool probe_ok() const;
  const DomainSource& target(const std::string& name) const;
  std::uint64_t episode_base_seed() const;
  std::uint64_t fingerprint() const;
};

// `section.key = value` lines, `#` comments. Training options are applied on
// top of the named profile, so `profile` is read before any `train.` key.
// Relative dataset paths resolve against base_dir. A profile given here wins
// over the one in the text.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                              const std::optional<std::string>& profile = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::optional<std::string>& profile = std::nullopt);
// Canonical text form; parses back to an equivalent config.
std::string to_text(const ExperimentConfig& config);

struct ResultRecord {
  std::string method;
  std::string target;
  std::string unlabeled_source;
  int n_way = 0;
  int k_shot = 0;
  int episode_id = 0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kResultsHeader =
    "method,target,unlabeled_source,n_way,k_shot,episode_id,accuracy,seed";

std::string format_record(const ResultRecord& r);
ResultRecord parse_record(const std::string& line);
std::vector<ResultRecord> read_results(const std::filesystem::path& path);

// Data every stage of a run shares: base domain, generated targets and their
// unlabeled / evaluation splits.
struct PreparedData {
  Dataset base;
  std::map<std::string, Dataset> full;
  std::map<std::string, UnlabeledSplit> splits;
};

PreparedData prepare_data(const ExperimentConfig& config);

TrainConfig teacher_config(const ExperimentConfig& config);
TrainConfig student_config(const ExperimentConfig& config, const MethodSpec& method);
Protocol protocol_for(const ExperimentConfig& config, int shot);

// Nested unlabeled subsets for the fraction sweep. The evaluation pool is the
// complement of the largest fraction, so every fraction is scored on the same
// tasks; smaller subsets are stratified subsets of larger ones' source.
struct SweepSplit {
  Dataset eval_pool;
  std::vector<std::pair<double, Dataset>> unlabeled;  // ascending fraction
};

SweepSplit sweep_split(const Dataset& target, std::span<const double> fractions,
                       std::uint64_t seed);

struct RunOutcome {
  std::filesystem::path output_dir;
  int cells_completed = 0;
  std::vector<std::string> failures;  // "cell: message"
};

// Writes results.csv, summary.json, report.txt, ami.csv, episodes.csv,
// logs/*.csv, teacher.bundle and, when cells fail, failures.csv.
RunOutcome run_experiment(const ExperimentConfig& config);

struct ReportRow {
  std::string label;  // method, or method[unlabeled_source] when it differs from target
  double mean = 0.0;
  double ci_half_width = 0.0;
  int n_episodes = 0;
  bool bold = false;
};

struct ReportTable {
  std::string target;
  int n_way = 0;
  int k_shot = 0;
  std::vector<ReportRow> rows;
  // p-values of every pair, keyed "a|b" with a < b.
  std::map<std::string, double> p_values;
};

struct Report {
  std::vector<ReportTable> tables;

  const ReportTable* find(const std::string& target, int k_shot) const;
  const ReportRow* row(const std::string& target, int k_shot, const std::string& label) const;
};

Report build_report(const std::vector<ResultRecord>& records);
// Reads results.csv from the directory and writes report.txt and
// summary.json; ReportError when there is nothing to report.
Report emit_report(const std::filesystem::path& results_dir);
std::string format_report(const Report& report);

}  // namespace startup

#endif  // STARTUP_EXPERIMENT_HPP_
