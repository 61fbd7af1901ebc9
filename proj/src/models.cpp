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

#include "startup/models.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "startup/error.hpp"
#include "startup/random.hpp"

namespace startup {

void ArchConfig::validate() const {
  auto check = [](Index v, const char* what) {
    if (v < 1) throw ConfigError(std::string("arch: ") + what + " must be >= 1");
  };
  check(input_dim, "input_dim");
  for (Index h : hidden_dims) check(h, "hidden dim");
  check(embed_dim, "embed_dim");
  check(num_classes, "num_classes");
  check(proj_hidden_dim, "proj_hidden_dim");
  check(proj_dim, "proj_dim");
}

std::string to_string(InitStrategy strategy) {
  switch (strategy) {
    case InitStrategy::kRandom: return "random";
    case InitStrategy::kTeacherEmbeddingRandomClassifier: return "teacher_embedding_random_classifier";
    case InitStrategy::kFullTeacher: return "full_teacher";
  }
  return "?";
}

InitStrategy parse_init_strategy(const std::string& text) {
  if (text == "random") return InitStrategy::kRandom;
  if (text == "teacher_embedding_random_classifier") {
    return InitStrategy::kTeacherEmbeddingRandomClassifier;
  }
  if (text == "full_teacher") return InitStrategy::kFullTeacher;
  throw ConfigError("unknown init strategy '" + text + "'");
}

namespace {

DenseLayer glorot_layer(Index fan_in, Index fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseLayer layer{Matrix(fan_in, fan_out), Matrix::Zero(1, fan_out)};
  for (Index r = 0; r < fan_in; ++r) {
    for (Index c = 0; c < fan_out; ++c) layer.weight(r, c) = dist(rng);
  }
  return layer;
}

}  // namespace

ModelBundle init_bundle(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  ModelBundle b;
  b.arch = arch;
  b.seed = seed;
  Index prev = arch.input_dim;
  for (Index h : arch.hidden_dims) {
    b.encoder.push_back(glorot_layer(prev, h, rng));
    prev = h;
  }
  b.encoder.push_back(glorot_layer(prev, arch.embed_dim, rng));
  b.classifier = glorot_layer(arch.embed_dim, arch.num_classes, rng);
  b.projection[0] = glorot_layer(arch.embed_dim, arch.proj_hidden_dim, rng);
  b.projection[1] = glorot_layer(arch.proj_hidden_dim, arch.proj_dim, rng);
  return b;
}

ModelBundle init_student(InitStrategy strategy, const ModelBundle& teacher, std::uint64_t seed) {
  ModelBundle student = init_bundle(teacher.arch, seed);
  switch (strategy) {
    case InitStrategy::kRandom:
      break;
    case InitStrategy::kTeacherEmbeddingRandomClassifier:
      student.encoder = teacher.encoder;
      break;
    case InitStrategy::kFullTeacher:
      student.encoder = teacher.encoder;
      student.classifier = teacher.classifier;
      break;
  }
  return student;
}

BundleNodes add_bundle_parameters(Graph& graph, const ModelBundle& bundle, HeadSelection heads) {
  BundleNodes nodes;
  for (std::size_t i = 0; i < bundle.encoder.size(); ++i) {
    std::string prefix = "encoder." + std::to_string(i);
    nodes.encoder.push_back({graph.parameter(prefix + ".weight", bundle.encoder[i].weight),
                             graph.parameter(prefix + ".bias", bundle.encoder[i].bias)});
  }
  if (heads.classifier) {
    nodes.classifier = LayerNodes{graph.parameter("classifier.weight", bundle.classifier.weight),
                                  graph.parameter("classifier.bias", bundle.classifier.bias)};
  }
  if (heads.projection) {
    std::array<LayerNodes, 2> proj;
    for (std::size_t i = 0; i < 2; ++i) {
      std::string prefix = "projection." + std::to_string(i);
      proj[i] = {graph.parameter(prefix + ".weight", bundle.projection[i].weight),
                 graph.parameter(prefix + ".bias", bundle.projection[i].bias)};
    }
    nodes.projection = proj;
  }
  return nodes;
}

namespace {

NodeId dense(Graph& g, const LayerNodes& layer, NodeId x) {
  return g.add(g.matmul(x, layer.weight), layer.bias);
}

}  // namespace

NodeId embed_node(Graph& graph, const BundleNodes& nodes, NodeId batch) {
  NodeId h = batch;
  for (const LayerNodes& layer : nodes.encoder) h = graph.relu(dense(graph, layer, h));
  return h;
}

NodeId logits_node(Graph& graph, const BundleNodes& nodes, NodeId embeddings) {
  if (!nodes.classifier) throw ContractError("graph has no classifier head");
  return dense(graph, *nodes.classifier, embeddings);
}

NodeId classify_node(Graph& graph, const BundleNodes& nodes, NodeId embeddings,
                     double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("classify: temperature must be positive");
  NodeId z = logits_node(graph, nodes, embeddings);
  if (temperature != 1.0) z = graph.scale(z, 1.0 / temperature);
  return graph.softmax_rows(z);
}

NodeId project_node(Graph& graph, const BundleNodes& nodes, NodeId embeddings) {
  if (!nodes.projection) throw ContractError("graph has no projection head");
  const auto& proj = *nodes.projection;
  NodeId h = graph.relu(dense(graph, proj[0], embeddings));
  return graph.l2_normalize_rows(dense(graph, proj[1], h));
}

ModelBundle read_bundle(const Graph& graph, const BundleNodes& nodes, ModelBundle base) {
  auto read = [&](DenseLayer& layer, const LayerNodes& n) {
    layer.weight = graph.value(n.weight);
    layer.bias = graph.value(n.bias);
  };
  for (std::size_t i = 0; i < nodes.encoder.size(); ++i) read(base.encoder[i], nodes.encoder[i]);
  if (nodes.classifier) read(base.classifier, *nodes.classifier);
  if (nodes.projection) {
    for (std::size_t i = 0; i < 2; ++i) read(base.projection[i], (*nodes.projection)[i]);
  }
  return base;
}

namespace {

void check_width(const Matrix& m, Index width, const char* what) {
  if (m.cols() != width) {
    throw DimensionError(std::string(what) + ": expected width " + std::to_string(width) +
                         ", got " + std::to_string(m.cols()));
  }
}

}  // namespace

Matrix embed(const ModelBundle& bundle, const Matrix& batch) {
  check_width(batch, bundle.arch.input_dim, "embed");
  Graph g;
  BundleNodes nodes = add_bundle_parameters(g, bundle, {.classifier = false});
  NodeId x = g.input("x", kDynamic, bundle.arch.input_dim);
  NodeId e = embed_node(g, nodes, x);
  g.forward(Feed{}.set("x", batch));
  return g.value(e);
}

Matrix logits(const ModelBundle& bundle, const Matrix& embeddings) {
  check_width(embeddings, bundle.arch.embed_dim, "logits");
  Graph g;
  BundleNodes nodes = add_bundle_parameters(g, bundle, {});
  NodeId e = g.input("e", kDynamic, bundle.arch.embed_dim);
  NodeId z = logits_node(g, nodes, e);
  g.forward(Feed{}.set("e", embeddings));
  return g.value(z);
}

Matrix classify(const ModelBundle& bundle, const Matrix& embeddings, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("classify: temperature must be positive");
  check_width(embeddings, bundle.arch.embed_dim, "classify");
  Graph g;
  BundleNodes nodes = add_bundle_parameters(g, bundle, {});
  NodeId e = g.input("e", kDynamic, bundle.arch.embed_dim);
  NodeId p = classify_node(g, nodes, e, temperature);
  g.forward(Feed{}.set("e", embeddings));
  return g.value(p);
}

Matrix project(const ModelBundle& bundle, const Matrix& embeddings, std::size_t* zero_rows) {
  check_width(embeddings, bundle.arch.embed_dim, "project");
  Graph g;
  BundleNodes nodes = add_bundle_parameters(g, bundle, {.classifier = false, .projection = true});
  NodeId e = g.input("e", kDynamic, bundle.arch.embed_dim);
  NodeId p = project_node(g, nodes, e);
  g.forward(Feed{}.set("e", embeddings));
  if (zero_rows) *zero_rows = g.zero_rows();
  return g.value(p);
}

std::uint64_t fingerprint(const ModelBundle& bundle) {
  Fingerprint fp;
  const ArchConfig& a = bundle.arch;
  fp.u64(a.input_dim).u64(a.embed_dim).u64(a.num_classes).u64(a.proj_hidden_dim).u64(a.proj_dim);
  for (Index h : a.hidden_dims) fp.u64(h);
  for (const DenseLayer& l : bundle.encoder) fp.matrix(l.weight).matrix(l.bias);
  fp.matrix(bundle.classifier.weight).matrix(bundle.classifier.bias);
  for (const DenseLayer& l : bundle.projection) fp.matrix(l.weight).matrix(l.bias);
  return fp.value();
}

// Text format, one token stream:
//   startup-bundle <version>
//   arch <input> <embed> <classes> <proj_hidden> <proj> <n_hidden> <h...>
//   seed <u64>
//   matrix <name> <rows> <cols> <row-major values...>   (repeated)
//   end
std::string serialize_bundle(const ModelBundle& bundle) {
  std::ostringstream out;
  const ArchConfig& a = bundle.arch;
  out << "startup-bundle " << kBundleFormatVersion << "\n";
  out << "arch " << a.input_dim << ' ' << a.embed_dim << ' ' << a.num_classes << ' '
      << a.proj_hidden_dim << ' ' << a.proj_dim << ' ' << a.hidden_dims.size();
  for (Index h : a.hidden_dims) out << ' ' << h;
  out << "\nseed " << bundle.seed << "\n";
  auto write = [&](const std::string& name, const Matrix& m) {
    out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << "\n";
    char buf[64];
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) {
        auto res = std::to_chars(buf, buf + sizeof buf, m(r, c));
        if (c) out << ' ';
        out.write(buf, res.ptr - buf);
      }
      out << "\n";
    }
  };
  for (std::size_t i = 0; i < bundle.encoder.size(); ++i) {
    write("encoder." + std::to_string(i) + ".weight", bundle.encoder[i].weight);
    write("encoder." + std::to_string(i) + ".bias", bundle.encoder[i].bias);
  }
  write("classifier.weight", bundle.classifier.weight);
  write("classifier.bias", bundle.classifier.bias);
  for (std::size_t i = 0; i < 2; ++i) {
    write("projection." + std::to_string(i) + ".weight", bundle.projection[i].weight);
    write("projection." + std::to_string(i) + ".bias", bundle.projection[i].bias);
  }
  out << "end\n";
  return out.str();
}

ModelBundle deserialize_bundle(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int version = -1;
  if (!(in >> tag >> version) || tag != "startup-bundle") {
    throw FormatError("not a model bundle (missing 'startup-bundle' header)");
  }
  if (version != kBundleFormatVersion) {
    throw FormatError("bundle format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kBundleFormatVersion) + ")");
  }
  ModelBundle b;
  ArchConfig& a = b.arch;
  std::size_t n_hidden = 0;
  if (!(in >> tag) || tag != "arch" ||
      !(in >> a.input_dim >> a.embed_dim >> a.num_classes >> a.proj_hidden_dim >> a.proj_dim >>
        n_hidden)) {
    throw FormatError("bundle: malformed arch record");
  }
  a.hidden_dims.assign(n_hidden, 0);
  for (Index& h : a.hidden_dims) {
    if (!(in >> h)) throw FormatError("bundle: malformed hidden dims");
  }
  a.validate();
  if (!(in >> tag >> b.seed) || tag != "seed") throw FormatError("bundle: malformed seed record");

  auto read = [&](const std::string& name, Index rows, Index cols) {
    std::string got;
    Index r = 0, c = 0;
    if (!(in >> tag >> got >> r >> c) || tag != "matrix" || got != name) {
      throw FormatError("bundle: expected matrix '" + name + "'");
    }
    if (r != rows || c != cols) {
      throw FormatError("bundle: matrix '" + name + "' has shape " + std::to_string(r) + "x" +
                        std::to_string(c) + ", arch implies " + std::to_string(rows) + "x" +
                        std::to_string(cols));
    }
    Matrix m(rows, cols);
    std::string token;
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        if (!(in >> token)) throw FormatError("bundle: truncated matrix '" + name + "'");
        double v = 0.0;
        auto res = std::from_chars(token.data(), token.data() + token.size(), v);
        if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
          throw FormatError("bundle: bad number '" + token + "' in '" + name + "'");
        }
        m(i, j) = v;
      }
    }
    return m;
  };
  Index prev = a.input_dim;
  std::vector<Index> outs = a.hidden_dims;
  outs.push_back(a.embed_dim);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    DenseLayer l;
    l.weight = read("encoder." + std::to_string(i) + ".weight", prev, outs[i]);
    l.bias = read("encoder." + std::to_string(i) + ".bias", 1, outs[i]);
    b.encoder.push_back(std::move(l));
    prev = outs[i];
  }
  b.classifier.weight = read("classifier.weight", a.embed_dim, a.num_classes);
  b.classifier.bias = read("classifier.bias", 1, a.num_classes);
  b.projection[0].weight = read("projection.0.weight", a.embed_dim, a.proj_hidden_dim);
  b.projection[0].bias = read("projection.0.bias", 1, a.proj_hidden_dim);
  b.projection[1].weight = read("projection.1.weight", a.proj_hidden_dim, a.proj_dim);
  b.projection[1].bias = read("projection.1.bias", 1, a.proj_dim);
  if (!(in >> tag) || tag != "end") throw FormatError("bundle: missing end marker");
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << serialize_bundle(bundle);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_bundle(ss.str());
}

}  // namespace startup
