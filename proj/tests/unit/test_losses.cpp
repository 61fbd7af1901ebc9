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
#include <random>

#include "doctest.h"
#include "startup/error.hpp"
#include "startup/losses.hpp"
#include "support/gradcheck_suite.hpp"
#include "support/oracles.hpp"

using namespace startup;

namespace {

Matrix random_probs(std::mt19937_64& rng, Index n, Index c) {
  Matrix p = gradcheck::uniform(rng, n, c, 0.01, 1.0);
  for (Index i = 0; i < n; ++i) p.row(i) /= p.row(i).sum();
  return p;
}

Matrix unit_rows(std::mt19937_64& rng, Index n, Index d) {
  Matrix z = gradcheck::uniform(rng, n, d);
  for (Index i = 0; i < n; ++i) z.row(i).normalize();
  return z;
}

}  // namespace

TEST_CASE("cross entropy by hand") {
  Matrix p(2, 3);
  p << 0.7, 0.2, 0.1,
       0.1, 0.1, 0.8;
  std::vector<int> y{0, 2};
  CHECK(cross_entropy(p, y) == doctest::Approx(-(std::log(0.7) + std::log(0.8)) / 2).epsilon(1e-14));
}

TEST_CASE("cross entropy floors zero probabilities") {
  Matrix p(1, 2);
  p << 1.0, 0.0;
  std::vector<int> y{1};
  CHECK(cross_entropy(p, y) == doctest::Approx(-std::log(kProbabilityFloor)));
}

TEST_CASE("cross entropy errors") {
  Matrix p = Matrix::Constant(2, 2, 0.5);
  std::vector<int> short_labels{0};
  CHECK_THROWS_AS(cross_entropy(p, short_labels), DimensionError);
  std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(cross_entropy(p, bad), DataError);
  std::vector<int> none;
  CHECK_THROWS_AS(cross_entropy(Matrix(0, 2), none), ContractError);
  Matrix not_stochastic = Matrix::Constant(2, 2, 0.7);
  std::vector<int> ok{0, 1};
  CHECK_THROWS_AS(cross_entropy(not_stochastic, ok), DataError);
}

TEST_CASE("kl is non-negative and zero only on equal inputs") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    Index n = 1 + t % 5, c = 2 + t % 4;
    Matrix p = random_probs(rng, n, c), q = random_probs(rng, n, c);
    CHECK(kl_soft(p, q) > 0.0);
    CHECK(std::abs(kl_soft(p, p)) < 1e-14);
  }
}

TEST_CASE("kl against one-hot targets equals cross entropy") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    Index n = 1 + t % 6, c = 2 + t % 5;
    Matrix p = random_probs(rng, n, c);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int& l : y) l = std::uniform_int_distribution<int>(0, static_cast<int>(c) - 1)(rng);
    CHECK(std::abs(kl_soft(p, one_hot(y, c)) - cross_entropy(p, y)) < 1e-10);
  }
}

TEST_CASE("kl by hand") {
  Matrix p(1, 2), q(1, 2);
  p << 0.5, 0.5;
  q << 0.9, 0.1;
  double expected = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
  CHECK(kl_soft(p, q) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("nt_xent matches the brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    Index n = 1 + t % 4, d = 2 + t % 5;
    double tau = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    PairedBatch b = make_paired_batch(unit_rows(rng, n, d), unit_rows(rng, n, d));
    CHECK(std::abs(nt_xent(b, tau) - oracle::nt_xent(b.projections, tau)) < 1e-10);
  }
}

TEST_CASE("nt_xent with one pair is zero") {
  std::mt19937_64 rng(6);
  PairedBatch b = make_paired_batch(unit_rows(rng, 1, 3), unit_rows(rng, 1, 3));
  // Only the positive remains in each row's denominator.
  CHECK(std::abs(nt_xent(b, 0.5)) < 1e-14);
}

TEST_CASE("nt_xent is invariant to row permutations that keep pairs") {
  std::mt19937_64 rng(7);
  Matrix a = unit_rows(rng, 3, 4), v = unit_rows(rng, 3, 4);
  PairedBatch b = make_paired_batch(a, v);
  PairedBatch swapped = make_paired_batch(v, a);
  CHECK(std::abs(nt_xent(b, 0.7) - nt_xent(swapped, 0.7)) < 1e-12);
}

TEST_CASE("nt_xent lower when views agree") {
  std::mt19937_64 rng(8);
  Matrix a = unit_rows(rng, 4, 6);
  Matrix noisy = a + 2.0 * gradcheck::uniform(rng, 4, 6);
  for (Index i = 0; i < 4; ++i) noisy.row(i).normalize();
  CHECK(nt_xent(make_paired_batch(a, a), 0.5) < nt_xent(make_paired_batch(a, noisy), 0.5));
}

TEST_CASE("nt_xent errors") {
  std::mt19937_64 rng(9);
  PairedBatch b = make_paired_batch(unit_rows(rng, 2, 3), unit_rows(rng, 2, 3));
  CHECK_THROWS_AS(nt_xent(b, 0.0), ConfigError);
  PairedBatch bad = b;
  bad.projections(0, 0) += 1.0;
  CHECK_THROWS_AS(nt_xent(bad, 1.0), DataError);
  bad = b;
  bad.pairing[0] = 0;
  CHECK_THROWS_AS(nt_xent(bad, 1.0), DataError);
  bad = b;
  bad.pairing = {1, 0, 2};
  CHECK_THROWS_AS(nt_xent(bad, 1.0), DimensionError);
  CHECK_THROWS_AS(make_paired_batch(Matrix::Zero(2, 3), Matrix::Zero(3, 3)), DimensionError);
}

TEST_CASE("masks") {
  Matrix self = self_similarity_mask(3);
  CHECK(self(1, 1) == kMaskedLogit);
  CHECK(self(0, 1) == 0.0);
  std::vector<Index> pairing{2, 3, 0, 1};
  Matrix pos = positive_pair_mask(pairing);
  CHECK(pos.sum() == 4.0);
  CHECK(pos(0, 2) == 1.0);
  CHECK(pos(3, 1) == 1.0);
}

TEST_CASE("objective weights") {
  std::mt19937_64 rng(10);
  ObjectiveInputs in;
  in.base_probs = random_probs(rng, 4, 3);
  in.base_labels = {0, 1, 2, 0};
  in.unlabeled_probs = random_probs(rng, 5, 3);
  in.soft_targets = random_probs(rng, 5, 3);
  in.paired = make_paired_batch(unit_rows(rng, 3, 4), unit_rows(rng, 3, 4));
  double ce = cross_entropy(in.base_probs, in.base_labels);
  double kl = kl_soft(in.unlabeled_probs, in.soft_targets);
  double ss = nt_xent(in.paired, 1.0);
  CHECK(startup_objective(in, {1, 1, 1}) == doctest::Approx(ce + kl + ss).epsilon(1e-14));
  CHECK(startup_objective(in, {0.5, 2, 0}) == doctest::Approx(0.5 * ce + 2 * kl).epsilon(1e-14));
  CHECK_THROWS_AS(startup_objective(in, {-1, 1, 1}), ConfigError);

  SUBCASE("a zero weight skips validation of its inputs") {
    in.paired.projections.setZero();
    CHECK(startup_objective(in, {1, 1, 0}) == doctest::Approx(ce + kl).epsilon(1e-14));
  }
}

TEST_CASE("loss gradients match finite differences") {
  for (const auto& r : gradcheck::run(10, 11)) {
    INFO(r.name);
    CHECK(r.max_relative_error < 1e-5);
    CHECK(r.checked > 0);
  }
}
