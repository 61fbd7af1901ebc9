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

// Teacher training, soft pseudo-labelling and student training.
//
// Both trainers use minibatch SGD with momentum and weight decay, pick the
// starting learning rate from a candidate list by short probe runs, halve
// the rate when the epoch-mean training loss stops improving, and return the
// parameters with the lowest loss on an internal validation split.

#ifndef STARTUP_PIPELINE_HPP_
#define STARTUP_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "startup/datagen.hpp"
#include "startup/losses.hpp"
#include "startup/models.hpp"

namespace startup {

struct TrainConfig {
  int epochs = 200;          // student; an epoch is one pass over the unlabeled data
  int teacher_epochs = 100;  // teacher; an epoch is one pass over the base data
  int batch_size_base = 64;
  int batch_size_unlabeled = 64;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> lr_candidates{1e-1, 5e-2, 3e-2, 1e-2, 5e-3, 3e-3, 1e-3};
  int min_probe_updates = 50;
  double lr_decay_factor = 2.0;
  int lr_patience_epochs = 20;
  double val_fraction_unlabeled = 0.10;
  double val_fraction_base = 0.05;
  TermWeights term_weights;
  InitStrategy init_strategy = InitStrategy::kTeacherEmbeddingRandomClassifier;
  double nt_xent_temperature = 1.0;
  double soft_label_temperature = 1.0;
  AugmentPolicy augment{.noise_sigma = 1.0, .dropout_prob = 0.1, .jitter_lo = 0.8, .jitter_hi = 1.2};
  ArchConfig arch;  // input_dim and num_classes are taken from the data
  std::uint64_t seed = 0;

  void validate() const;

  static TrainConfig desk();
  static TrainConfig paper();
  static TrainConfig profile(const std::string& name);
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_ms = 0.0;
};

struct LrSelection {
  double learning_rate = 0.0;
  int probe_epochs = 0;
  std::vector<double> candidates;
  std::vector<double> val_losses;  // non-finite for diverged candidates
};

struct TrainingRun {
  ModelBundle bundle;
  std::vector<EpochLog> log;
  LrSelection lr_selection;
  double best_val_loss = 0.0;
  int best_epoch = 0;  // 0 = the initial parameters
  double initial_val_loss = 0.0;
};

void write_training_log(std::span<const EpochLog> log, const std::filesystem::path& path);

struct SoftLabeledSet {
  Matrix features;
  Matrix targets;  // row-stochastic, one row per unlabeled example
  std::uint64_t teacher_fingerprint = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

TrainingRun train_teacher(const Dataset& base, const TrainConfig& config);

SoftLabeledSet pseudo_label(const ModelBundle& teacher, const Dataset& unlabeled,
                            double temperature = 1.0);

// Smallest epoch count that yields at least min_updates optimizer steps.
int probe_epochs(int updates_per_epoch, int min_updates);

// Calls evaluator(lr, epochs) for every candidate and returns the one with the
// lowest finite validation loss; losses within 1e-12 tie toward the larger
// rate. A single candidate is returned without evaluation.
LrSelection select_learning_rate(std::span<const double> candidates, int updates_per_epoch,
                                 int min_updates,
                                 const std::function<double(double lr, int epochs)>& evaluator);

TrainingRun train_student(const Dataset& base, const SoftLabeledSet& soft_set,
                          const Dataset& unlabeled, const ModelBundle& teacher,
                          const TrainConfig& config);

}  // namespace startup

#endif  // STARTUP_PIPELINE_HPP_
