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

#ifndef STARTUP_MODELS_HPP_
#define STARTUP_MODELS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "startup/diffcore.hpp"

namespace startup {

// Encoder: input_dim -> hidden_dims... -> embed_dim, relu after every layer.
// Classifier: embed_dim -> num_classes (linear).
// Projection: embed_dim -> proj_hidden_dim -> proj_dim, relu in between.
struct ArchConfig {
  Index input_dim = 64;
  std::vector<Index> hidden_dims{64, 64};
  Index embed_dim = 32;
  Index num_classes = 20;
  Index proj_hidden_dim = 32;
  Index proj_dim = 16;

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

struct DenseLayer {
  Matrix weight;  // fan_in x fan_out
  Matrix bias;    // 1 x fan_out

  bool operator==(const DenseLayer& o) const { return weight == o.weight && bias == o.bias; }
};

struct ModelBundle {
  ArchConfig arch;
  std::vector<DenseLayer> encoder;
  DenseLayer classifier;
  std::array<DenseLayer, 2> projection;
  std::uint64_t seed = 0;

  bool operator==(const ModelBundle&) const = default;
};

enum class InitStrategy {
  kRandom,
  kTeacherEmbeddingRandomClassifier,
  kFullTeacher,
};

std::string to_string(InitStrategy strategy);
InitStrategy parse_init_strategy(const std::string& text);

// Glorot-uniform weights, zero biases; a pure function of (arch, seed).
ModelBundle init_bundle(const ArchConfig& arch, std::uint64_t seed);

Matrix embed(const ModelBundle& bundle, const Matrix& batch);
// Row-stochastic softmax(logits / temperature).
Matrix classify(const ModelBundle& bundle, const Matrix& embeddings, double temperature = 1.0);
Matrix logits(const ModelBundle& bundle, const Matrix& embeddings);
// Unit-norm projection rows. All-zero rows stay zero and are counted in
// *zero_rows when given.
Matrix project(const ModelBundle& bundle, const Matrix& embeddings,
               std::size_t* zero_rows = nullptr);

ModelBundle init_student(InitStrategy strategy, const ModelBundle& teacher,
                         std::uint64_t seed);

std::uint64_t fingerprint(const ModelBundle& bundle);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle deserialize_bundle(const std::string& text);

inline constexpr int kBundleFormatVersion = 1;

// ---------------------------------------------------------------------------
// Graph wiring. Parameters are copied into the graph; read_bundle copies the
// (possibly trained) values back out.

struct LayerNodes {
  NodeId weight;
  NodeId bias;
};

struct BundleNodes {
  std::vector<LayerNodes> encoder;
  std::optional<LayerNodes> classifier;
  std::optional<std::array<LayerNodes, 2>> projection;
};

struct HeadSelection {
  bool classifier = true;
  bool projection = false;
};

BundleNodes add_bundle_parameters(Graph& graph, const ModelBundle& bundle, HeadSelection heads);

NodeId embed_node(Graph& graph, const BundleNodes& nodes, NodeId batch);
NodeId logits_node(Graph& graph, const BundleNodes& nodes, NodeId embeddings);
NodeId classify_node(Graph& graph, const BundleNodes& nodes, NodeId embeddings,
                     double temperature = 1.0);
NodeId project_node(Graph& graph, const BundleNodes& nodes, NodeId embeddings);

// Returns `base` with every parameter present in `nodes` replaced by its
// current value in `graph`.
ModelBundle read_bundle(const Graph& graph, const BundleNodes& nodes, ModelBundle base);

}  // namespace startup

#endif  // STARTUP_MODELS_HPP_
