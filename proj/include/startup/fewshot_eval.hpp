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

// Episodic n-way k-shot evaluation with a linear probe on frozen features,
// plus the statistics used to report and compare methods.

#ifndef STARTUP_FEWSHOT_EVAL_HPP_
#define STARTUP_FEWSHOT_EVAL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "startup/datagen.hpp"
#include "startup/models.hpp"

namespace startup {

struct Episode {
  int way = 5;
  int shot = 1;
  int query_per_class = 15;
  std::vector<std::size_t> support_rows;  // rows of the pool
  std::vector<int> support_labels;        // remapped to 0..way-1
  std::vector<std::size_t> query_rows;
  std::vector<int> query_labels;
  std::vector<int> classes;  // pool class behind each remapped label
  std::uint64_t seed = 0;

  // Content hash; equal for identical tasks.
  std::uint64_t hash() const;
};

Episode sample_episode(const Dataset& pool, int way, int shot, int query_per_class,
                       std::uint64_t episode_seed);

struct ProbeConfig {
  int epochs = 100;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct LinearProbe {
  Matrix weight;  // d x way
  Matrix bias;    // 1 x way

  Matrix logits(const Matrix& embeddings) const;
  std::vector<int> predict(const Matrix& embeddings) const;
};

// Full-batch SGD on cross-entropy starting from zero weights.
LinearProbe fit_linear_probe(const Matrix& support_embeddings, std::span<const int> support_labels,
                             int way, const ProbeConfig& config = {});

// Accuracy of a probe fit on the support embeddings, over the query rows.
double evaluate_episode(const Matrix& pool_embeddings, const Episode& episode,
                        const ProbeConfig& config = {});
double evaluate_episode(const ModelBundle& bundle, const Dataset& pool, const Episode& episode,
                        const ProbeConfig& config = {});

struct Protocol {
  int way = 5;
  int shot = 1;
  int query_per_class = 15;
  int n_episodes = 600;
  std::uint64_t base_seed = 0;
  ProbeConfig probe;
};

std::uint64_t episode_seed(std::uint64_t base_seed, int episode_index);

// Identifies (protocol, pool): summaries with equal fingerprints were scored
// on the same tasks.
std::uint64_t protocol_fingerprint(const Protocol& protocol, const Dataset& pool);

struct ResultSummary {
  std::vector<double> per_episode_accuracy;
  std::vector<std::uint64_t> episode_hashes;
  double mean = 0.0;
  double ci_half_width = 0.0;
  int n_episodes = 0;
  std::string method_tag;
  std::uint64_t protocol_fingerprint = 0;
};

// mean and 1.96 * sample_std / sqrt(n).
void summarize(std::span<const double> accuracies, double& mean, double& ci_half_width);

ResultSummary run_evaluation(const ModelBundle& bundle, const Dataset& pool,
                             const Protocol& protocol, const std::string& method_tag = {},
                             int threads = 1);
ResultSummary run_evaluation_on_embeddings(const Matrix& pool_embeddings, const Dataset& pool,
                                           const Protocol& protocol,
                                           const std::string& method_tag = {}, int threads = 1);

enum class Direction { kEqual, kAGreater, kBGreater };

struct Comparison {
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;  // at 0.05
  Direction direction = Direction::kEqual;
  double mean_difference = 0.0;
};

// Two-sided paired t-test on per-episode accuracy differences (a - b).
Comparison compare(const ResultSummary& a, const ResultSummary& b);
Comparison paired_t_test(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
// Two-sided tail P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

}  // namespace startup

#endif  // STARTUP_FEWSHOT_EVAL_HPP_
