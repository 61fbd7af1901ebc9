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

#include "startup/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "startup/error.hpp"
#include "startup/random.hpp"

namespace startup {

void TrainConfig::validate() const {
  if (epochs < 0 || teacher_epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size_base < 1 || batch_size_unlabeled < 1) throw ConfigError("train: batch sizes must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (lr_candidates.empty()) throw ConfigError("train: lr_candidates is empty");
  for (double lr : lr_candidates) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: learning rates must be positive");
  }
  if (min_probe_updates < 1) throw ConfigError("train: min_probe_updates must be >= 1");
  if (!(lr_decay_factor >= 1.0)) throw ConfigError("train: lr_decay_factor must be >= 1");
  if (lr_patience_epochs < 1) throw ConfigError("train: lr_patience_epochs must be >= 1");
  for (double f : {val_fraction_unlabeled, val_fraction_base}) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("train: validation fractions must lie in (0, 1)");
  }
  const TermWeights& w = term_weights;
  if (w.cross_entropy < 0.0 || w.kl < 0.0 || w.contrastive < 0.0) {
    throw ConfigError("train: term weights must be >= 0");
  }
  if (w.cross_entropy == 0.0 && w.kl == 0.0 && w.contrastive == 0.0) {
    throw ConfigError("train: at least one term weight must be positive");
  }
  if (!(nt_xent_temperature > 0.0) || !(soft_label_temperature > 0.0)) {
    throw ConfigError("train: temperatures must be positive");
  }
  augment.validate();
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.epochs = 1000;
  c.teacher_epochs = 400;
  c.batch_size_base = 256;
  c.batch_size_unlabeled = 256;
  return c;
}

TrainConfig TrainConfig::profile(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

void write_training_log(std::span<const EpochLog> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "epoch,lr,train_loss,val_loss,wall_ms\n";
  out.precision(17);
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << e.learning_rate << ',' << e.train_loss << ',' << e.val_loss << ','
        << e.wall_ms << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

SoftLabeledSet pseudo_label(const ModelBundle& teacher, const Dataset& unlabeled,
                            double temperature) {
  if (unlabeled.dim() != teacher.arch.input_dim) {
    throw ConfigError("pseudo_label: data width " + std::to_string(unlabeled.dim()) +
                      " does not match teacher input width " +
                      std::to_string(teacher.arch.input_dim));
  }
  SoftLabeledSet set;
  set.features = unlabeled.features;
  set.targets = classify(teacher, embed(teacher, unlabeled.features), temperature);
  set.teacher_fingerprint = fingerprint(teacher);
  return set;
}

int probe_epochs(int updates_per_epoch, int min_updates) {
  if (updates_per_epoch < 1) throw ContractError("probe_epochs: updates_per_epoch must be >= 1");
  return (min_updates + updates_per_epoch - 1) / updates_per_epoch;
}

LrSelection select_learning_rate(std::span<const double> candidates, int updates_per_epoch,
                                 int min_updates,
                                 const std::function<double(double, int)>& evaluator) {
  if (candidates.empty()) throw ConfigError("select_learning_rate: no candidates");
  LrSelection sel;
  sel.candidates.assign(candidates.begin(), candidates.end());
  sel.probe_epochs = probe_epochs(updates_per_epoch, min_updates);
  if (candidates.size() == 1) {
    sel.learning_rate = candidates[0];
    sel.val_losses.push_back(std::numeric_limits<double>::quiet_NaN());
    return sel;
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double loss = evaluator(candidates[i], sel.probe_epochs);
    sel.val_losses.push_back(loss);
    if (!std::isfinite(loss)) continue;
    if (!best) {
      best = i;
      continue;
    }
    double current = sel.val_losses[*best];
    if (loss < current - 1e-12 ||
        (std::abs(loss - current) <= 1e-12 && candidates[i] > candidates[*best])) {
      best = i;
    }
  }
  if (!best) {
    std::string msg = "select_learning_rate: every candidate diverged (";
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      msg += (i ? ", " : "") + std::to_string(candidates[i]) + " -> " + std::to_string(sel.val_losses[i]);
    }
    throw SelectionError(msg + ")");
  }
  sel.learning_rate = candidates[*best];
  return sel;
}

namespace {

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

IndexSplit carve_validation(std::size_t n, double fraction, std::uint64_t seed, const char* what) {
  if (n < 2) {
    throw ConfigError(std::string(what) + ": need at least 2 examples to hold out a validation split");
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  IndexSplit split;
  split.val.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(labels[r]);
  return out;
}

// Cycles through a fixed index pool in reshuffled passes. Batches are always
// `batch` long (or the whole pool when it is smaller).
class Cycler {
 public:
  Cycler(std::vector<std::size_t> pool, std::uint64_t seed) : pool_(std::move(pool)), rng_(seed) {
    reshuffle();
  }
  std::vector<std::size_t> next(std::size_t batch) {
    batch = std::min(batch, pool_.size());
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_ = pool_;
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> pool_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

struct Batch {
  Matrix xb, yb;  // base features, one-hot labels
  Matrix xu, tu;  // clean unlabeled features, soft targets
  Matrix xa;      // two augmented views, stacked
  Matrix self_mask, positive_mask;
};

// Stream identifiers for derive_seed; one independent stream per purpose so
// disabling a term never shifts the randomness seen by another.
enum Stream : std::uint64_t {
  kStudentInit = 1,
  kUnlabeledValSplit,
  kBaseValSplit,
  kUnlabeledOrder,
  kBaseOrder,
  kAugment,
  kValAugment,
  kTeacherInit,
  kTeacherValSplit,
  kTeacherOrder,
};

// One training graph plus the data it consumes.
class Session {
 public:
  struct Data {
    // Base side (only when the cross-entropy term is active).
    Matrix base_features;
    std::vector<int> base_labels;
    std::vector<std::size_t> base_train;
    Batch base_val;
    // Unlabeled side (only when a KL or contrastive term is active).
    Matrix unl_features;
    Matrix unl_targets;
    std::vector<std::size_t> unl_train;
    Batch unl_val;
    Index classes = 0;
  };

  Session(const ModelBundle& init, const TermWeights& w, double nt_temperature,
          const Data* data, const TrainConfig* config, bool teacher_mode)
      : init_(init), weights_(w), data_(data), config_(config), teacher_mode_(teacher_mode) {
    use_ce_ = w.cross_entropy != 0.0;
    use_kl_ = w.kl != 0.0;
    use_ss_ = w.contrastive != 0.0;
    nodes_ = add_bundle_parameters(graph_, init, {.classifier = use_ce_ || use_kl_, .projection = use_ss_});
    Index dim = init.arch.input_dim;
    Index classes = init.arch.num_classes;
    std::vector<NodeId> parts;
    if (use_ce_) {
      NodeId xb = graph_.input("xb", kDynamic, dim);
      NodeId yb = graph_.input("yb", kDynamic, classes);
      NodeId p = classify_node(graph_, nodes_, embed_node(graph_, nodes_, xb));
      parts.push_back(graph_.scale(cross_entropy_node(graph_, p, yb), w.cross_entropy));
    }
    if (use_kl_) {
      NodeId xu = graph_.input("xu", kDynamic, dim);
      NodeId tu = graph_.input("tu", kDynamic, classes);
      NodeId p = classify_node(graph_, nodes_, embed_node(graph_, nodes_, xu));
      parts.push_back(graph_.scale(kl_soft_node(graph_, p, tu), w.kl));
    }
    if (use_ss_) {
      NodeId xa = graph_.input("xa", kDynamic, dim);
      NodeId self = graph_.input("self_mask", kDynamic, kDynamic);
      NodeId pos = graph_.input("positive_mask", kDynamic, kDynamic);
      NodeId z = project_node(graph_, nodes_, embed_node(graph_, nodes_, xa));
      parts.push_back(graph_.scale(nt_xent_node(graph_, z, self, pos, nt_temperature), w.contrastive));
    }
    loss_ = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) loss_ = graph_.add(loss_, parts[i]);
  }

  struct Result {
    ModelBundle best;
    double best_val = 0.0;
    int best_epoch = 0;
    double initial_val = 0.0;
    double final_val = 0.0;
    std::vector<EpochLog> log;
  };

  Result run(double lr, int epochs, bool schedule) {
    OptimizerState state = make_optimizer_state(graph_, lr, config_->momentum, config_->weight_decay);
    std::uint64_t seed = config_->seed;
    Rng unl_rng(derive_seed(seed, teacher_mode_ ? kTeacherOrder : kUnlabeledOrder));
    Rng aug_rng(derive_seed(seed, kAugment));
    std::optional<Cycler> base_cycle;
    if (use_ce_ && !teacher_mode_) base_cycle.emplace(data_->base_train, derive_seed(seed, kBaseOrder));

    Result result;
    result.initial_val = evaluate(validation_batch());
    result.best_val = result.initial_val;
    result.best = init_;
    result.final_val = result.initial_val;
    if (!std::isfinite(result.initial_val)) throw NumericError("non-finite validation loss before training");

    double best_train = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
      auto t0 = std::chrono::steady_clock::now();
      double lr_now = state.learning_rate;
      double train_loss = teacher_mode_ ? teacher_epoch(state, unl_rng)
                                        : student_epoch(state, unl_rng, aug_rng, base_cycle);
      if (!std::isfinite(train_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      double val = evaluate(validation_batch());
      if (!std::isfinite(val)) {
        throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
      }
      result.final_val = val;
      if (val < result.best_val) {
        result.best_val = val;
        result.best_epoch = epoch;
        result.best = read_bundle(graph_, nodes_, init_);
      }
      if (schedule) {
        if (train_loss < best_train) {
          best_train = train_loss;
          stale = 0;
        } else if (++stale >= config_->lr_patience_epochs) {
          state.learning_rate /= config_->lr_decay_factor;
          stale = 0;
        }
      }
      auto t1 = std::chrono::steady_clock::now();
      result.log.push_back({epoch, lr_now, train_loss, val,
                            std::chrono::duration<double, std::milli>(t1 - t0).count()});
    }
    return result;
  }

  int updates_per_epoch() const {
    std::size_t n = teacher_mode_ ? data_->base_train.size() : data_->unl_train.size();
    std::size_t b = static_cast<std::size_t>(teacher_mode_ ? config_->batch_size_base
                                                           : config_->batch_size_unlabeled);
    return static_cast<int>((n + b - 1) / b);
  }

 private:
  const Batch& validation_batch() {
    if (!val_ready_) {
      val_ = Batch{};
      if (use_ce_) {
        val_.xb = data_->base_val.xb;
        val_.yb = data_->base_val.yb;
      }
      if (use_kl_ || use_ss_) {
        val_.xu = data_->unl_val.xu;
        val_.tu = data_->unl_val.tu;
      }
      if (use_ss_) {
        Rng rng(derive_seed(config_->seed, kValAugment));
        fill_views(val_, rng);
      }
      val_ready_ = true;
    }
    return val_;
  }

  void fill_views(Batch& b, Rng& rng) {
    Matrix a = augment_rows(b.xu, config_->augment, rng);
    Matrix c = augment_rows(b.xu, config_->augment, rng);
    b.xa.resize(2 * b.xu.rows(), b.xu.cols());
    b.xa.topRows(b.xu.rows()) = a;
    b.xa.bottomRows(b.xu.rows()) = c;
    Index n2 = b.xa.rows();
    auto it = masks_.find(n2);
    if (it == masks_.end()) {
      PairedBatch pairing = make_paired_batch(Matrix::Zero(n2 / 2, 1), Matrix::Zero(n2 / 2, 1));
      it = masks_.emplace(n2, std::make_pair(self_similarity_mask(n2),
                                             positive_pair_mask(pairing.pairing))).first;
    }
    b.self_mask = it->second.first;
    b.positive_mask = it->second.second;
  }

  Feed make_feed(const Batch& b) const {
    Feed feed;
    if (use_ce_) feed.set("xb", b.xb).set("yb", b.yb);
    if (use_kl_) feed.set("xu", b.xu).set("tu", b.tu);
    if (use_ss_) feed.set("xa", b.xa).set("self_mask", b.self_mask).set("positive_mask", b.positive_mask);
    return feed;
  }

  double evaluate(const Batch& b) {
    graph_.forward(make_feed(b));
    return graph_.scalar(loss_);
  }

  double step(const Batch& b, OptimizerState& state) {
    graph_.forward(make_feed(b));
    double loss = graph_.scalar(loss_);
    if (!std::isfinite(loss)) return loss;
    std::vector<Matrix> grads = graph_.backward(loss_);
    sgd_step(graph_, grads, state);
    return loss;
  }

  double teacher_epoch(OptimizerState& state, Rng& rng) {
    std::vector<std::size_t> order = data_->base_train;
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t bs = static_cast<std::size_t>(config_->batch_size_base);
    double total = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::span<const std::size_t> rows(order.data() + start, std::min(bs, order.size() - start));
      Batch b;
      b.xb = gather_rows(data_->base_features, rows);
      b.yb = one_hot(gather_labels(data_->base_labels, rows), data_->classes);
      double loss = step(b, state);
      if (!std::isfinite(loss)) return loss;
      total += loss;
      ++steps;
    }
    return total / steps;
  }

  double student_epoch(OptimizerState& state, Rng& order_rng, Rng& aug_rng,
                       std::optional<Cycler>& base_cycle) {
    std::vector<std::size_t> order = data_->unl_train;
    std::shuffle(order.begin(), order.end(), order_rng);
    std::size_t bs = static_cast<std::size_t>(config_->batch_size_unlabeled);
    double total = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::span<const std::size_t> rows(order.data() + start, std::min(bs, order.size() - start));
      Batch b;
      b.xu = gather_rows(data_->unl_features, rows);
      if (use_kl_) b.tu = gather_rows(data_->unl_targets, rows);
      if (use_ss_) fill_views(b, aug_rng);
      if (use_ce_) {
        auto base_rows = base_cycle->next(static_cast<std::size_t>(config_->batch_size_base));
        b.xb = gather_rows(data_->base_features, base_rows);
        b.yb = one_hot(gather_labels(data_->base_labels, base_rows), data_->classes);
      }
      double loss = step(b, state);
      if (!std::isfinite(loss)) return loss;
      total += loss;
      ++steps;
    }
    return total / steps;
  }

  Graph graph_;
  BundleNodes nodes_;
  NodeId loss_;
  ModelBundle init_;
  TermWeights weights_;
  const Data* data_;
  const TrainConfig* config_;
  bool teacher_mode_;
  bool use_ce_ = false, use_kl_ = false, use_ss_ = false;
  Batch val_;
  bool val_ready_ = false;
  std::map<Index, std::pair<Matrix, Matrix>> masks_;
};

TrainingRun train_with_selection(const ModelBundle& init, const TermWeights& weights,
                                 const Session::Data& data, const TrainConfig& config,
                                 bool teacher_mode, int epochs) {
  TrainingRun run;
  run.bundle = init;
  {
    Session probe(init, weights, config.nt_xent_temperature, &data, &config, teacher_mode);
    run.initial_val_loss = probe.run(config.lr_candidates[0], 0, false).initial_val;
    run.best_val_loss = run.initial_val_loss;
    if (epochs == 0) {
      run.lr_selection.candidates = config.lr_candidates;
      run.lr_selection.learning_rate = config.lr_candidates[0];
      return run;
    }
    int upe = probe.updates_per_epoch();
    run.lr_selection = select_learning_rate(
        config.lr_candidates, upe, config.min_probe_updates, [&](double lr, int k) {
          Session trial(init, weights, config.nt_xent_temperature, &data, &config, teacher_mode);
          try {
            return trial.run(lr, k, false).final_val;
          } catch (const NumericError&) {
            return std::numeric_limits<double>::infinity();
          }
        });
  }
  Session main(init, weights, config.nt_xent_temperature, &data, &config, teacher_mode);
  Session::Result r = main.run(run.lr_selection.learning_rate, epochs, true);
  run.bundle = std::move(r.best);
  run.best_val_loss = r.best_val;
  run.best_epoch = r.best_epoch;
  run.log = std::move(r.log);
  return run;
}

}  // namespace

TrainingRun train_teacher(const Dataset& base, const TrainConfig& config) {
  config.validate();
  if (!base.labels) throw ConfigError("train_teacher: base data must be labeled");
  base.validate();
  std::set<int> distinct(base.labels->begin(), base.labels->end());
  if (distinct.size() < 2) throw ConfigError("train_teacher: base data needs at least two classes");

  ArchConfig arch = config.arch;
  arch.input_dim = base.dim();
  arch.num_classes = base.class_count;
  ModelBundle init = init_bundle(arch, derive_seed(config.seed, kTeacherInit));

  IndexSplit split = carve_validation(base.size(), config.val_fraction_base,
                                      derive_seed(config.seed, kTeacherValSplit), "train_teacher");
  Session::Data data;
  data.classes = base.class_count;
  data.base_features = base.features;
  data.base_labels = *base.labels;
  data.base_train = split.train;
  data.base_val.xb = gather_rows(base.features, split.val);
  data.base_val.yb = one_hot(gather_labels(*base.labels, split.val), base.class_count);

  TermWeights ce_only{1.0, 0.0, 0.0};
  return train_with_selection(init, ce_only, data, config, /*teacher_mode=*/true,
                              config.teacher_epochs);
}

TrainingRun train_student(const Dataset& base, const SoftLabeledSet& soft_set,
                          const Dataset& unlabeled, const ModelBundle& teacher,
                          const TrainConfig& config) {
  config.validate();
  if (soft_set.teacher_fingerprint != fingerprint(teacher)) {
    throw StalenessError("train_student: soft labels were produced by a different teacher");
  }
  if (soft_set.size() != unlabeled.size()) {
    throw StalenessError("train_student: soft label count differs from unlabeled count");
  }
  if (unlabeled.dim() != teacher.arch.input_dim) {
    throw ConfigError("train_student: unlabeled width does not match the teacher");
  }
  validate_row_stochastic(soft_set.targets, "soft targets", 1e-9);
  const TermWeights& w = config.term_weights;

  Session::Data data;
  data.classes = teacher.arch.num_classes;
  if (w.cross_entropy != 0.0) {
    if (!base.labels) throw ConfigError("train_student: base data must be labeled");
    if (base.dim() != teacher.arch.input_dim || base.class_count != teacher.arch.num_classes) {
      throw ConfigError("train_student: base data does not match the teacher architecture");
    }
    base.validate();
    IndexSplit split = carve_validation(base.size(), config.val_fraction_base,
                                        derive_seed(config.seed, kBaseValSplit), "train_student base");
    data.base_features = base.features;
    data.base_labels = *base.labels;
    data.base_train = split.train;
    data.base_val.xb = gather_rows(base.features, split.val);
    data.base_val.yb = one_hot(gather_labels(*base.labels, split.val), base.class_count);
  }
  IndexSplit unl = carve_validation(unlabeled.size(), config.val_fraction_unlabeled,
                                    derive_seed(config.seed, kUnlabeledValSplit),
                                    "train_student unlabeled");
  data.unl_features = unlabeled.features;
  data.unl_targets = soft_set.targets;
  data.unl_train = unl.train;
  data.unl_val.xu = gather_rows(unlabeled.features, unl.val);
  data.unl_val.tu = gather_rows(soft_set.targets, unl.val);

  ModelBundle init = init_student(config.init_strategy, teacher, derive_seed(config.seed, kStudentInit));
  return train_with_selection(init, w, data, config, /*teacher_mode=*/false, config.epochs);
}

}  // namespace startup
