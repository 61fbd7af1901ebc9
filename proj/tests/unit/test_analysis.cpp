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
#include <random>
#include <string>

#include "doctest.h"
#include "startup/analysis.hpp"
#include "startup/error.hpp"
#include "support/oracles.hpp"

using namespace startup;

namespace {

Partition part(const std::vector<int>& v) { return make_partition(v); }

}  // namespace

TEST_CASE("partitions") {
  Partition p = part({0, 2, 2});
  CHECK(p.cluster_count == 3);
  CHECK(p.size() == 3);
  CHECK_THROWS_AS(part({0, -1}), ContractError);
  CHECK(part({}).cluster_count == 0);
}

TEST_CASE("ami matches the oracle") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    int n = std::uniform_int_distribution<int>(2, 50)(rng);
    int ku = std::uniform_int_distribution<int>(1, 6)(rng);
    int kv = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<int> u = oracle::random_partition(rng, n, ku);
    std::vector<int> v = oracle::random_partition(rng, n, kv);
    INFO("trial " << t);
    CHECK(std::abs(adjusted_mutual_information(part(u), part(v)) - oracle::ami(u, v)) < 1e-9);
  }
}

TEST_CASE("expected mutual information matches averaging over permutations") {
  std::vector<int> u{0, 0, 1, 1, 2, 2, 0};
  std::vector<int> v{0, 1, 1, 0, 1, 0, 1};
  ClusterAgreement a = cluster_agreement(part(u), part(v));
  CHECK(std::abs(a.expected_mutual_information - (double)oracle::expected_mi_by_permutation(u, v)) < 1e-12);
  CHECK(std::abs(a.mutual_information - (double)oracle::mutual_information(oracle::contingency(u, v))) < 1e-12);
}

TEST_CASE("ami of a partition with itself is one") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    std::vector<int> u = oracle::random_partition(rng, 60, 2 + t % 5);
    CHECK(adjusted_mutual_information(part(u), part(u)) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ami is invariant to relabelling and symmetric") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> u = oracle::random_partition(rng, 40, 4);
    std::vector<int> v = oracle::random_partition(rng, 40, 3);
    double uv = adjusted_mutual_information(part(u), part(v));
    CHECK(std::abs(uv - adjusted_mutual_information(part(v), part(u))) < 1e-12);
    std::vector<int> relabel = u;
    for (int& x : relabel) x = 3 - x;
    CHECK(std::abs(uv - adjusted_mutual_information(part(relabel), part(v))) < 1e-12);
  }
}

TEST_CASE("ami of independent random partitions is near zero") {
  std::mt19937_64 rng(4);
  double total = 0.0;
  for (int t = 0; t < 200; ++t) {
    total += std::abs(adjusted_mutual_information(part(oracle::random_partition(rng, 1000, 5)),
                                                  part(oracle::random_partition(rng, 1000, 5))));
  }
  CHECK(total / 200 < 0.02);
}

TEST_CASE("small worked example") {
  // Orthogonal splits of four points: MI is zero and E[MI] = ln 2 / 3.
  ClusterAgreement a = cluster_agreement(part({0, 0, 1, 1}), part({0, 1, 0, 1}));
  CHECK(a.mutual_information == doctest::Approx(0.0));
  CHECK(a.expected_mutual_information == doctest::Approx(std::log(2.0) / 3).epsilon(1e-13));
  CHECK(a.ami == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("degenerate partitions") {
  CHECK(adjusted_mutual_information(part({0, 0, 0}), part({0, 0, 0})) == 0.0);
  CHECK(adjusted_mutual_information(part({0, 0, 0}), part({0, 1, 2})) == 0.0);
  // Unused cluster ids do not change the answer.
  CHECK(adjusted_mutual_information(part({0, 0, 3, 3}), part({1, 1, 0, 0})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(cluster_agreement(part({0, 1}), part({0})), ContractError);
}

TEST_CASE("induced grouping is the teacher argmax") {
  ArchConfig a;
  a.input_dim = 3;
  a.hidden_dims = {};
  a.embed_dim = 3;
  a.num_classes = 3;
  ModelBundle b = init_bundle(a, 0);
  b.encoder[0].weight = Matrix::Identity(3, 3);
  b.encoder[0].bias.setZero();
  b.classifier.weight = Matrix::Identity(3, 3);
  Dataset d;
  d.features.resize(4, 3);
  d.features << 1, 0, 0,
                0, 2, 1,
                0, 0, 5,
                1, 1, 0;
  Partition p = induced_grouping(b, d);
  CHECK(p.assignments == std::vector<int>{0, 1, 2, 0});
  CHECK(p.cluster_count == 3);
  d.features = Matrix::Zero(1, 4);
  CHECK_THROWS_AS(induced_grouping(b, d), DimensionError);
}

TEST_CASE("embedding export") {
  ArchConfig a;
  a.input_dim = 3;
  a.hidden_dims = {4};
  a.embed_dim = 2;
  a.num_classes = 2;
  ModelBundle b = init_bundle(a, 1);
  Dataset d;
  d.features = Matrix::Random(3, 3);
  d.labels = std::vector<int>{1, 0, 1};
  d.class_count = 2;
  auto path = std::filesystem::temp_directory_path() / "startup_export_test.csv";
  export_embeddings(b, d, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,label,e0,e1");
  std::getline(in, line);
  CHECK(line.rfind("0,1,", 0) == 0);
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);

  d.labels.reset();
  export_embeddings(b, d, path);
  std::ifstream again(path);
  std::getline(again, line);
  std::getline(again, line);
  CHECK(line.rfind("0,,", 0) == 0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(export_embeddings(b, d, "/nonexistent/dir/out.csv"), IoError);
}
