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

#include "startup/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "startup/error.hpp"

namespace startup {

PairedBatch make_paired_batch(const Matrix& view_a, const Matrix& view_b) {
  if (view_a.rows() != view_b.rows() || view_a.cols() != view_b.cols()) {
    throw DimensionError("make_paired_batch: views differ in shape");
  }
  PairedBatch batch;
  Index n = view_a.rows();
  batch.projections.resize(2 * n, view_a.cols());
  batch.projections.topRows(n) = view_a;
  batch.projections.bottomRows(n) = view_b;
  batch.pairing.resize(static_cast<std::size_t>(2 * n));
  for (Index i = 0; i < n; ++i) {
    batch.pairing[static_cast<std::size_t>(i)] = i + n;
    batch.pairing[static_cast<std::size_t>(i + n)] = i;
  }
  return batch;
}

Matrix one_hot(std::span<const int> labels, Index classes) {
  Matrix m = Matrix::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
    m(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return m;
}

Matrix self_similarity_mask(Index rows) {
  Matrix m = Matrix::Zero(rows, rows);
  m.diagonal().setConstant(kMaskedLogit);
  return m;
}

Matrix positive_pair_mask(std::span<const Index> pairing) {
  validate_pairing(pairing);
  Index n = static_cast<Index>(pairing.size());
  Matrix m = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) m(i, pairing[static_cast<std::size_t>(i)]) = 1.0;
  return m;
}

void validate_row_stochastic(const Matrix& probs, const char* what, double tol) {
  for (Index r = 0; r < probs.rows(); ++r) {
    double s = 0.0;
    for (Index c = 0; c < probs.cols(); ++c) {
      double p = probs(r, c);
      if (!std::isfinite(p) || p < 0.0) {
        throw DataError(std::string(what) + ": row " + std::to_string(r) +
                        " has a negative or non-finite entry");
      }
      s += p;
    }
    if (std::abs(s - 1.0) > tol) {
      throw DataError(std::string(what) + ": row " + std::to_string(r) + " sums to " +
                      std::to_string(s));
    }
  }
}

void validate_pairing(std::span<const Index> pairing) {
  Index n = static_cast<Index>(pairing.size());
  for (Index i = 0; i < n; ++i) {
    Index j = pairing[static_cast<std::size_t>(i)];
    if (j < 0 || j >= n) throw DataError("pairing: row " + std::to_string(i) + " out of range");
    if (j == i) throw DataError("pairing: row " + std::to_string(i) + " is its own positive");
    if (pairing[static_cast<std::size_t>(j)] != i) {
      throw DataError("pairing is not an involution at row " + std::to_string(i));
    }
  }
}

NodeId cross_entropy_node(Graph& graph, NodeId probs, NodeId onehot) {
  // mean over all N*C entries times C == mean over rows of the row sums.
  double classes = static_cast<double>(graph.cols(onehot));
  if (classes == 0.0) classes = 1.0;
  NodeId logp = graph.log(probs, kProbabilityFloor);
  return graph.scale(graph.mean(graph.multiply(onehot, logp)), -classes);
}

NodeId kl_soft_node(Graph& graph, NodeId probs, NodeId targets) {
  double classes = static_cast<double>(graph.cols(targets));
  if (classes == 0.0) classes = 1.0;
  // 0 * log(0) evaluates to 0 through the smallest-normal floor.
  NodeId log_t = graph.log(targets, std::numeric_limits<double>::min());
  NodeId log_p = graph.log(probs, kProbabilityFloor);
  NodeId diff = graph.add(log_t, graph.scale(log_p, -1.0));
  return graph.scale(graph.mean(graph.multiply(targets, diff)), classes);
}

NodeId nt_xent_node(Graph& graph, NodeId projections, NodeId self_mask, NodeId positive_mask,
                    double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("nt_xent: temperature must be positive");
  NodeId sim = graph.matmul(projections, projections, /*transpose_b=*/true);
  if (temperature != 1.0) sim = graph.scale(sim, 1.0 / temperature);
  NodeId p = graph.softmax_rows(graph.add(sim, self_mask));
  NodeId positive = graph.sum_rows(graph.multiply(p, positive_mask));
  return graph.scale(graph.mean(graph.log(positive, 1e-300)), -1.0);
}

namespace {

// Declares a constant input whose declared shape is taken from its value, so
// builder helpers can read column counts before the first forward pass.
NodeId bound(Graph& g, Matrix m, const char* name) { return g.constant(std::move(m), name); }

}  // namespace

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() == 0) throw ContractError("cross_entropy: empty batch");
  if (static_cast<Index>(labels.size()) != probs.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(probs.rows()) + " rows");
  }
  validate_row_stochastic(probs, "cross_entropy probabilities");
  Graph g;
  NodeId p = bound(g, probs, "probs");
  NodeId y = bound(g, one_hot(labels, probs.cols()), "onehot");
  NodeId loss = cross_entropy_node(g, p, y);
  g.forward();
  return g.scalar(loss);
}

double kl_soft(const Matrix& student_probs, const Matrix& targets) {
  if (student_probs.rows() == 0) throw ContractError("kl_soft: empty batch");
  if (student_probs.rows() != targets.rows() || student_probs.cols() != targets.cols()) {
    throw DimensionError("kl_soft: student and target shapes differ");
  }
  validate_row_stochastic(student_probs, "kl_soft student");
  validate_row_stochastic(targets, "kl_soft targets");
  Graph g;
  NodeId p = bound(g, student_probs, "probs");
  NodeId t = bound(g, targets, "targets");
  NodeId loss = kl_soft_node(g, p, t);
  g.forward();
  return g.scalar(loss);
}

double nt_xent(const PairedBatch& batch, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("nt_xent: temperature must be positive");
  Index n = batch.projections.rows();
  if (n < 2) throw ContractError("nt_xent: need at least one pair");
  if (static_cast<Index>(batch.pairing.size()) != n) {
    throw DimensionError("nt_xent: pairing length differs from row count");
  }
  validate_pairing(batch.pairing);
  for (Index r = 0; r < n; ++r) {
    if (std::abs(batch.projections.row(r).norm() - 1.0) > 1e-6) {
      throw DataError("nt_xent: row " + std::to_string(r) + " is not unit norm");
    }
  }
  Graph g;
  NodeId z = bound(g, batch.projections, "projections");
  NodeId self = bound(g, self_similarity_mask(n), "self_mask");
  NodeId pos = bound(g, positive_pair_mask(batch.pairing), "positive_mask");
  NodeId loss = nt_xent_node(g, z, self, pos, temperature);
  g.forward();
  return g.scalar(loss);
}

double startup_objective(const ObjectiveInputs& in, const TermWeights& w) {
  if (w.cross_entropy < 0.0 || w.kl < 0.0 || w.contrastive < 0.0) {
    throw ConfigError("objective weights must be non-negative");
  }
  double total = 0.0;
  if (w.cross_entropy != 0.0) total += w.cross_entropy * cross_entropy(in.base_probs, in.base_labels);
  if (w.kl != 0.0) total += w.kl * kl_soft(in.unlabeled_probs, in.soft_targets);
  if (w.contrastive != 0.0) total += w.contrastive * nt_xent(in.paired, in.nt_xent_temperature);
  return total;
}

}  // namespace startup
