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


#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "doctest.h"
#include "startup/error.hpp"
#include "startup/pipeline.hpp"

using namespace startup;

namespace {

DomainSpec small_domain(double alpha, int per_class = 30) {
  DomainSpec s;
  s.class_count = 4;
  s.per_class_count = per_class;
  s.input_dim = 10;
  s.basis_count = 4;
  s.alpha = alpha;
  return s;
}

TrainConfig fast_config() {
  TrainConfig c;
  c.epochs = 3;
  c.teacher_epochs = 5;
  c.batch_size_base = 16;
  c.batch_size_unlabeled = 16;
  c.lr_candidates = {0.1, 0.03};
  c.min_probe_updates = 10;
  c.arch.hidden_dims = {12};
  c.arch.embed_dim = 8;
  c.arch.proj_hidden_dim = 8;
  c.arch.proj_dim = 4;
  return c;
}

struct Fixture {
  Dataset base = generate_domain(small_domain(1.0), 1);
  Dataset target = generate_domain(small_domain(0.5, 40), 2);
  UnlabeledSplit split = split_unlabeled(target, 0.5, 3);
  TrainConfig config = fast_config();
  ModelBundle teacher = train_teacher(base, config).bundle;
  SoftLabeledSet soft = pseudo_label(teacher, split.unlabeled);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("probe epochs") {
  CHECK(probe_epochs(1, 50) == 50);
  CHECK(probe_epochs(7, 50) == 8);
  CHECK(probe_epochs(50, 50) == 1);
  CHECK(probe_epochs(64, 50) == 1);
  CHECK_THROWS_AS(probe_epochs(0, 50), ContractError);
}

TEST_CASE("learning rate selection") {
  std::vector<double> cands{0.1, 0.01, 0.001};
  SUBCASE("lowest loss wins") {
    LrSelection s = select_learning_rate(cands, 7, 50, [](double lr, int epochs) {
      CHECK(epochs == 8);
      return std::abs(std::log10(lr) + 2.0);
    });
    CHECK(s.learning_rate == 0.01);
    CHECK(s.val_losses.size() == 3);
  }
  SUBCASE("ties go to the larger rate") {
    LrSelection s = select_learning_rate(cands, 1, 1, [](double lr, int) { return lr == 0.1 ? 2.0 : 1.0; });
    CHECK(s.learning_rate == 0.01);
    s = select_learning_rate(cands, 1, 1, [](double, int) { return 1.0; });
    CHECK(s.learning_rate == 0.1);
  }
  SUBCASE("diverged candidates are skipped") {
    LrSelection s = select_learning_rate(cands, 1, 1, [](double lr, int) {
      return lr > 0.05 ? std::numeric_limits<double>::infinity() : 1.0 + lr;
    });
    CHECK(s.learning_rate == 0.001);
    CHECK_THROWS_AS(select_learning_rate(cands, 1, 1,
                                         [](double, int) { return std::numeric_limits<double>::quiet_NaN(); }),
                    SelectionError);
  }
  SUBCASE("a single candidate is not probed") {
    std::vector<double> one{0.05};
    int calls = 0;
    LrSelection s = select_learning_rate(one, 1, 1, [&](double, int) { return ++calls, 1.0; });
    CHECK(s.learning_rate == 0.05);
    CHECK(calls == 0);
  }
}

TEST_CASE("train config validation and profiles") {
  CHECK_NOTHROW(TrainConfig::desk().validate());
  CHECK_NOTHROW(TrainConfig::paper().validate());
  CHECK(TrainConfig::paper().epochs == 1000);
  CHECK(TrainConfig::profile("desk").epochs == TrainConfig::desk().epochs);
  CHECK_THROWS_AS(TrainConfig::profile("laptop"), ConfigError);
  TrainConfig c;
  c.term_weights = {0, 0, 0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_candidates = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("teacher learns the base domain") {
  Fixture& f = fixture();
  Matrix p = classify(f.teacher, embed(f.teacher, f.base.features));
  int correct = 0;
  for (Index i = 0; i < p.rows(); ++i) {
    Index arg;
    p.row(i).maxCoeff(&arg);
    correct += arg == (*f.base.labels)[static_cast<std::size_t>(i)];
  }
  CHECK(correct > 0.9 * static_cast<double>(p.rows()));
}

TEST_CASE("teacher training is deterministic and logged") {
  Fixture& f = fixture();
  TrainingRun a = train_teacher(f.base, f.config);
  CHECK(a.bundle == f.teacher);
  CHECK(a.log.size() == static_cast<std::size_t>(f.config.teacher_epochs));
  CHECK(a.best_val_loss <= a.initial_val_loss);
  for (std::size_t i = 1; i < a.log.size(); ++i) CHECK(a.log[i].learning_rate <= a.log[i - 1].learning_rate);
  TrainConfig other = f.config;
  other.seed = 1;
  CHECK_FALSE(train_teacher(f.base, other).bundle == f.teacher);

  auto path = std::filesystem::temp_directory_path() / "startup_pipeline_log.csv";
  write_training_log(a.log, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header.find("epoch") == 0);
  std::filesystem::remove(path);
}

TEST_CASE("pseudo labels are the teacher's tempered predictions") {
  Fixture& f = fixture();
  Matrix expected = classify(f.teacher, embed(f.teacher, f.split.unlabeled.features));
  CHECK(f.soft.targets == expected);
  CHECK(f.soft.teacher_fingerprint == fingerprint(f.teacher));
  SoftLabeledSet hot = pseudo_label(f.teacher, f.split.unlabeled, 2.0);
  CHECK(hot.targets == classify(f.teacher, embed(f.teacher, f.split.unlabeled.features), 2.0));
  for (Index i = 0; i < hot.targets.rows(); ++i) CHECK(std::abs(hot.targets.row(i).sum() - 1.0) < 1e-12);
  DomainSpec narrow = small_domain(1.0);
  narrow.input_dim = 9;
  CHECK_THROWS_AS(pseudo_label(f.teacher, generate_domain(narrow, 1)), ConfigError);
}

TEST_CASE("student training is deterministic") {
  Fixture& f = fixture();
  TrainingRun a = train_student(f.base, f.soft, f.split.unlabeled, f.teacher, f.config);
  TrainingRun b = train_student(f.base, f.soft, f.split.unlabeled, f.teacher, f.config);
  CHECK(a.bundle == b.bundle);
  CHECK(a.log.size() == 3);
  CHECK(a.best_val_loss <= a.initial_val_loss);
}

TEST_CASE("a zero contrastive weight matches a config without it") {
  Fixture& f = fixture();
  TrainConfig c = f.config;
  c.term_weights = {1, 1, 0};
  TrainingRun a = train_student(f.base, f.soft, f.split.unlabeled, f.teacher, c);
  c.augment.noise_sigma = 3.0;  // only the contrastive views are augmented
  TrainingRun b = train_student(f.base, f.soft, f.split.unlabeled, f.teacher, c);
  CHECK(a.bundle == b.bundle);
}

TEST_CASE("without cross-entropy the base data is never read") {
  Fixture& f = fixture();
  TrainConfig c = f.config;
  c.term_weights = {0, 1, 1};
  TrainingRun a = train_student(f.base, f.soft, f.split.unlabeled, f.teacher, c);
  Dataset scrambled = f.base;
  scrambled.features.setRandom();
  TrainingRun b = train_student(scrambled, f.soft, f.split.unlabeled, f.teacher, c);
  CHECK(a.bundle == b.bundle);
  Dataset unlabeled_base = f.base;
  unlabeled_base.labels.reset();
  CHECK_NOTHROW(train_student(unlabeled_base, f.soft, f.split.unlabeled, f.teacher, c));
}

TEST_CASE("full-teacher init with zero epochs reproduces the pseudo labels") {
  Fixture& f = fixture();
  TrainConfig c = f.config;
  c.epochs = 0;
  c.init_strategy = InitStrategy::kFullTeacher;
  TrainingRun r = train_student(f.base, f.soft, f.split.unlabeled, f.teacher, c);
  Matrix p = classify(r.bundle, embed(r.bundle, f.split.unlabeled.features));
  CHECK((p - f.soft.targets).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(r.best_epoch == 0);
  CHECK(r.log.empty());
}

TEST_CASE("student input checks") {
  Fixture& f = fixture();
  SoftLabeledSet stale = f.soft;
  stale.teacher_fingerprint ^= 1;
  CHECK_THROWS_AS(train_student(f.base, stale, f.split.unlabeled, f.teacher, f.config), StalenessError);
  SoftLabeledSet shorter = f.soft;
  shorter.targets = shorter.targets.topRows(3).eval();
  shorter.features = shorter.features.topRows(3).eval();
  CHECK_THROWS_AS(train_student(f.base, shorter, f.split.unlabeled, f.teacher, f.config), StalenessError);
  Dataset unlabeled_base = f.base;
  unlabeled_base.labels.reset();
  CHECK_THROWS_AS(train_student(unlabeled_base, f.soft, f.split.unlabeled, f.teacher, f.config), ConfigError);
}
