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

// The three student objective terms: base cross-entropy, soft-target KL
// divergence KL(target || student), and the NT-Xent contrastive loss.
//
// Each loss exists as a graph builder (used for training) and as a plain
// function that evaluates the same graph on constant inputs.

#ifndef STARTUP_LOSSES_HPP_
#define STARTUP_LOSSES_HPP_

#include <span>
#include <vector>

#include "startup/diffcore.hpp"

namespace startup {

// Floor applied to student probabilities inside every log.
inline constexpr double kProbabilityFloor = 1e-12;
// Additive mask that removes an entry from a row softmax.
inline constexpr double kMaskedLogit = -1e300;

// Two views of the same examples, stacked; pairing[i] is the row holding the
// other view of row i.
struct PairedBatch {
  Matrix projections;
  std::vector<Index> pairing;
};

// Stacks view_a over view_b and pairs row i with row i + N.
PairedBatch make_paired_batch(const Matrix& view_a, const Matrix& view_b);

struct TermWeights {
  double cross_entropy = 1.0;
  double kl = 1.0;
  double contrastive = 1.0;

  bool operator==(const TermWeights&) const = default;
};

Matrix one_hot(std::span<const int> labels, Index classes);
// 2N x 2N: kMaskedLogit on the diagonal, 0 elsewhere.
Matrix self_similarity_mask(Index rows);
// 2N x 2N indicator of (i, pairing[i]).
Matrix positive_pair_mask(std::span<const Index> pairing);

void validate_row_stochastic(const Matrix& probs, const char* what, double tol = 1e-6);
void validate_pairing(std::span<const Index> pairing);

// Graph builders. `onehot`, `targets` and the masks are input nodes.
NodeId cross_entropy_node(Graph& graph, NodeId probs, NodeId onehot);
NodeId kl_soft_node(Graph& graph, NodeId probs, NodeId targets);
NodeId nt_xent_node(Graph& graph, NodeId projections, NodeId self_mask, NodeId positive_mask,
                    double temperature);

double cross_entropy(const Matrix& probs, std::span<const int> labels);
double kl_soft(const Matrix& student_probs, const Matrix& targets);
double nt_xent(const PairedBatch& batch, double temperature = 1.0);

struct ObjectiveInputs {
  Matrix base_probs;
  std::vector<int> base_labels;
  Matrix unlabeled_probs;
  Matrix soft_targets;
  PairedBatch paired;
  double nt_xent_temperature = 1.0;
};

// w_ce*CE + w_kl*KL + w_ss*NT-Xent. A zero weight skips its term entirely,
// including validation of that term's inputs.
double startup_objective(const ObjectiveInputs& inputs, const TermWeights& weights);

}  // namespace startup

#endif  // STARTUP_LOSSES_HPP_
