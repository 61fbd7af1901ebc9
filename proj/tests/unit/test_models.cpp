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

#include "doctest.h"
#include "startup/error.hpp"
#include "startup/models.hpp"

using namespace startup;

namespace {

ArchConfig small_arch() {
  ArchConfig a;
  a.input_dim = 6;
  a.hidden_dims = {5};
  a.embed_dim = 4;
  a.num_classes = 3;
  a.proj_hidden_dim = 4;
  a.proj_dim = 2;
  return a;
}

// Encoder 2 -> 2 with no hidden layer; weights chosen by hand.
ModelBundle hand_bundle() {
  ArchConfig a;
  a.input_dim = 2;
  a.hidden_dims = {};
  a.embed_dim = 2;
  a.num_classes = 3;
  a.proj_hidden_dim = 2;
  a.proj_dim = 2;
  ModelBundle b = init_bundle(a, 0);
  b.encoder[0].weight << 1.0, -2.0,
                         3.0, 0.5;
  b.encoder[0].bias << 0.5, 1.0;
  b.projection[0].weight << 1.0, 0.0,
                            0.0, 2.0;
  b.projection[0].bias << 0.0, -1.0;
  b.projection[1].weight << 1.0, 1.0,
                            1.0, -1.0;
  b.projection[1].bias << 0.0, 0.0;
  return b;
}

}  // namespace

TEST_CASE("init_bundle shapes and determinism") {
  ArchConfig a = small_arch();
  ModelBundle b = init_bundle(a, 42);
  REQUIRE(b.encoder.size() == 2);
  CHECK(b.encoder[0].weight.rows() == 6);
  CHECK(b.encoder[1].weight.cols() == 4);
  CHECK(b.classifier.weight.rows() == 4);
  CHECK(b.classifier.weight.cols() == 3);
  CHECK(b.projection.size() == 2);
  CHECK(b.projection[1].weight.cols() == 2);
  CHECK(b == init_bundle(a, 42));
  CHECK_FALSE(b == init_bundle(a, 43));
  CHECK(b.encoder[0].bias.isZero());

  ArchConfig d;
  d.embed_dim = 16;
  d.num_classes = 5;
  ModelBundle c = init_bundle(d, 1);
  CHECK(c.classifier.weight.rows() == 16);
  CHECK(c.classifier.weight.cols() == 5);
}

TEST_CASE("glorot bound holds") {
  ModelBundle b = init_bundle(small_arch(), 9);
  double limit = std::sqrt(6.0 / (6 + 5));
  CHECK(b.encoder[0].weight.cwiseAbs().maxCoeff() <= limit);
}

TEST_CASE("invalid arch is a config error") {
  ArchConfig a = small_arch();
  a.embed_dim = 0;
  CHECK_THROWS_AS(init_bundle(a, 0), ConfigError);
  a = small_arch();
  a.hidden_dims = {3, -1};
  CHECK_THROWS_AS(init_bundle(a, 0), ConfigError);
}

TEST_CASE("embed by hand") {
  ModelBundle b = hand_bundle();
  Matrix x(1, 2);
  x << 1.0, 0.0;
  // relu([1, -2] + [0.5, 1]) = relu([1.5, -1]) = [1.5, 0]
  Matrix e = embed(b, x);
  CHECK(e(0, 0) == doctest::Approx(1.5));
  CHECK(e(0, 1) == 0.0);
}

TEST_CASE("embed edge cases") {
  ModelBundle b = init_bundle(small_arch(), 3);
  CHECK(embed(b, Matrix(0, 6)).rows() == 0);
  CHECK(embed(b, Matrix(0, 6)).cols() == 4);
  Matrix x = Matrix::Random(1, 6);
  Matrix twice(2, 6);
  twice << x, x;
  Matrix e = embed(b, twice);
  CHECK(e.row(0) == e.row(1));
  CHECK_THROWS_AS(embed(b, Matrix::Zero(2, 5)), DimensionError);
}

TEST_CASE("classify") {
  ModelBundle b = init_bundle(small_arch(), 4);
  SUBCASE("zero head is uniform") {
    b.classifier.weight.setZero();
    Matrix p = classify(b, Matrix::Random(3, 4));
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index j = 0; j < p.cols(); ++j) CHECK(p(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    }
  }
  SUBCASE("known logits") {
    ArchConfig a = small_arch();
    a.embed_dim = 3;
    ModelBundle c = init_bundle(a, 0);
    c.classifier.weight = Matrix::Identity(3, 3);
    Matrix e(1, 3);
    e << 2.0, 1.0, 0.0;
    Matrix p = classify(c, e);
    double z = std::exp(2.0) + std::exp(1.0) + 1.0;
    CHECK(p(0, 0) == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
    CHECK(p(0, 0) == doctest::Approx(0.66524).epsilon(1e-5));
    CHECK(p(0, 1) == doctest::Approx(0.24473).epsilon(1e-4));
    CHECK(p(0, 2) == doctest::Approx(0.09003).epsilon(1e-4));
  }
  SUBCASE("huge temperature approaches uniform") {
    Matrix p = classify(b, Matrix::Random(5, 4) * 3.0, 1e6);
    CHECK((p.array() - 1.0 / 3).abs().maxCoeff() < 1e-4);
  }
  SUBCASE("argmax invariant to temperature") {
    Matrix e = Matrix::Random(40, 4) * 2.0;
    Matrix base = classify(b, e, 1.0);
    for (double t : {0.5, 2.0}) {
      Matrix p = classify(b, e, t);
      for (Index i = 0; i < e.rows(); ++i) {
        Index a1, a2;
        base.row(i).maxCoeff(&a1);
        p.row(i).maxCoeff(&a2);
        CHECK(a1 == a2);
      }
    }
  }
  SUBCASE("non-positive temperature") {
    CHECK_THROWS_AS(classify(b, Matrix::Random(1, 4), 0.0), ConfigError);
    CHECK_THROWS_AS(classify(b, Matrix::Random(1, 4), -1.0), ConfigError);
  }
}

TEST_CASE("project") {
  SUBCASE("unit rows") {
    ModelBundle b = init_bundle(small_arch(), 5);
    Matrix e = Matrix::Random(30, 4).cwiseAbs();
    std::size_t zeros = 0;
    Matrix z = project(b, e, &zeros);
    for (Index i = 0; i < z.rows(); ++i) {
      if (z.row(i).norm() > 0) CHECK(std::abs(z.row(i).norm() - 1.0) < 1e-9);
    }
    CHECK(static_cast<Index>(zeros) < z.rows());
  }
  SUBCASE("positive scaling of the output is invisible after normalization") {
    ModelBundle b = hand_bundle();
    // Zero biases make the head positively homogeneous.
    b.projection[0].bias.setZero();
    Matrix e(2, 2);
    e << 0.3, 0.7,
         0.6, 1.4;
    Matrix z = project(b, e);
    CHECK((z.row(0) - z.row(1)).norm() < 1e-12);
  }
  SUBCASE("hand evaluation") {
    ModelBundle b = hand_bundle();
    Matrix e(1, 2);
    e << 1.0, 1.0;
    // h = relu([1, 2] + [0, -1]) = [1, 1]; o = [1 + 1, 1 - 1] = [2, 0]; unit -> [1, 0]
    Matrix z = project(b, e);
    CHECK(z(0, 0) == doctest::Approx(1.0));
    CHECK(z(0, 1) == doctest::Approx(0.0));
  }
}

TEST_CASE("init_student strategies") {
  ModelBundle teacher = init_bundle(small_arch(), 10);
  ModelBundle full = init_student(InitStrategy::kFullTeacher, teacher, 77);
  CHECK(full.encoder == teacher.encoder);
  CHECK(full.classifier == teacher.classifier);
  ModelBundle emb = init_student(InitStrategy::kTeacherEmbeddingRandomClassifier, teacher, 77);
  CHECK(emb.encoder == teacher.encoder);
  CHECK_FALSE(emb.classifier.weight == teacher.classifier.weight);
  ModelBundle rnd = init_student(InitStrategy::kRandom, teacher, 77);
  CHECK(rnd == init_bundle(teacher.arch, 77));
}

TEST_CASE("full_teacher student reproduces teacher predictions exactly") {
  ModelBundle teacher = init_bundle(small_arch(), 10);
  ModelBundle student = init_student(InitStrategy::kFullTeacher, teacher, 5);
  Matrix x = Matrix::Random(20, 6);
  CHECK(classify(student, embed(student, x)) == classify(teacher, embed(teacher, x)));
}

TEST_CASE("classify of embed matches the composed graph") {
  ModelBundle b = init_bundle(small_arch(), 12);
  Matrix x = Matrix::Random(9, 6);
  Graph g;
  BundleNodes nodes = add_bundle_parameters(g, b, {});
  NodeId in = g.input("x", kDynamic, 6);
  NodeId p = classify_node(g, nodes, embed_node(g, nodes, in));
  g.forward(Feed().set("x", x));
  CHECK(g.value(p) == classify(b, embed(b, x)));
}

TEST_CASE("read_bundle round trip through the graph") {
  ModelBundle b = init_bundle(small_arch(), 13);
  Graph g;
  BundleNodes nodes = add_bundle_parameters(g, b, {.classifier = true, .projection = true});
  CHECK(read_bundle(g, nodes, b) == b);
  Matrix& w = g.mutable_parameter(nodes.encoder[0].weight);
  w(0, 0) += 1.0;
  ModelBundle changed = read_bundle(g, nodes, b);
  CHECK(changed.encoder[0].weight(0, 0) == b.encoder[0].weight(0, 0) + 1.0);
}

TEST_CASE("init strategy names") {
  for (InitStrategy s : {InitStrategy::kRandom, InitStrategy::kTeacherEmbeddingRandomClassifier,
                         InitStrategy::kFullTeacher}) {
    CHECK(parse_init_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_init_strategy("teacher"), ConfigError);
}

TEST_CASE("bundle serialization") {
  ModelBundle b = init_bundle(small_arch(), 21);
  std::string text = serialize_bundle(b);
  ModelBundle back = deserialize_bundle(text);
  CHECK(back == b);
  CHECK(fingerprint(back) == fingerprint(b));
  CHECK(serialize_bundle(back) == text);

  SUBCASE("version mismatch is explicit") {
    std::string other = text;
    other.replace(0, std::string("startup-bundle 1").size(), "startup-bundle 2");
    try {
      deserialize_bundle(other);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("garbage and truncation") {
    CHECK_THROWS_AS(deserialize_bundle("hello"), FormatError);
    CHECK_THROWS_AS(deserialize_bundle(text.substr(0, text.size() / 2)), FormatError);
  }
  SUBCASE("file round trip") {
    auto path = std::filesystem::temp_directory_path() / "startup_models_test.bundle";
    save_bundle(b, path);
    CHECK(load_bundle(path) == b);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_bundle(path), IoError);
  }
}

TEST_CASE("fingerprint sees every parameter") {
  ModelBundle b = init_bundle(small_arch(), 22);
  std::uint64_t f = fingerprint(b);
  ModelBundle c = b;
  c.projection[1].bias(0, 0) = 1e-300;
  CHECK(fingerprint(c) != f);
}
