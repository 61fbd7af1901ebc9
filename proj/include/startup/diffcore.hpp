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

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Graph is built once (define-then-run) and evaluated many times: feed
// the input nodes, call forward(), then backward() on a scalar node. Every
// model and loss in the library is expressed with these primitives.

#ifndef STARTUP_DIFFCORE_HPP_
#define STARTUP_DIFFCORE_HPP_

#include <Eigen/Dense>

#include <compare>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace startup {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Extent placeholder for inputs whose shape varies between calls (batch
// size, or a batch-by-batch similarity matrix).
inline constexpr Index kDynamic = -1;

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class Op {
  kInput,
  kParameter,
  kMatMul,
  kAdd,
  kMultiply,
  kScale,
  kRelu,
  kExp,
  kLog,
  kSum,
  kSumRows,
  kMean,
  kMaxRows,
  kSoftmaxRows,
  kL2NormalizeRows,
  kConcatRows,
};

const char* op_name(Op op);

// Named input values for one forward pass. Matrices are moved into the graph.
class Feed {
 public:
  Feed& set(std::string name, Matrix value) {
    values_[std::move(name)] = std::move(value);
    return *this;
  }
  std::map<std::string, Matrix>& values() { return values_; }

 private:
  std::map<std::string, Matrix> values_;
};

class Graph {
 public:
  // Leaves.
  NodeId input(std::string name, Index rows, Index cols);
  // An input with a bound value; may still be overridden through a Feed.
  NodeId constant(Matrix value, std::string name = {});
  NodeId parameter(std::string name, Matrix value);

  // a·b, or a·bᵀ when transpose_b is set.
  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
  // Elementwise a + b. b may also be a 1×cols row broadcast over a's rows.
  NodeId add(NodeId a, NodeId b);
  // Elementwise (Hadamard) product; shapes must match.
  NodeId multiply(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  // log(max(a, floor)). With floor == 0 a non-positive entry is a numeric
  // error; with floor > 0 entries below the floor have zero gradient.
  NodeId log(NodeId a, double floor = 0.0);
  NodeId sum(NodeId a);       // all entries -> 1×1
  NodeId sum_rows(NodeId a);  // N×C -> N×1
  NodeId mean(NodeId a);      // all entries -> 1×1
  NodeId max_rows(NodeId a);  // N×C -> N×1, gradient routed to first argmax
  NodeId softmax_rows(NodeId a);
  // Zero rows map to zero rows (and are counted in zero_rows()).
  NodeId l2_normalize_rows(NodeId a);
  NodeId concat_rows(NodeId a, NodeId b);

  void forward(Feed feed = {});
  // Requires a 1×1 loss node and a completed forward(). Returns the adjoint
  // of every parameter, in parameters() order.
  std::vector<Matrix> backward(NodeId loss);

  const Matrix& value(NodeId id) const;
  const Matrix& adjoint(NodeId id) const;
  double scalar(NodeId id) const;

  std::span<const NodeId> parameters() const { return parameters_; }
  const std::string& name(NodeId id) const;
  Op op(NodeId id) const;
  std::span<const NodeId> inputs_of(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  // Declared column count (always static).
  Index cols(NodeId id) const;

  // Parameter values live in the graph; training mutates them in place.
  Matrix& mutable_parameter(NodeId id);
  void set_parameter(NodeId id, const Matrix& value);

  // Rows zeroed by l2_normalize_rows during the last forward pass.
  std::size_t zero_rows() const { return zero_rows_; }

 private:
  struct Node {
    Op op;
    std::string name;
    std::vector<NodeId> inputs;
    Index rows;  // declared; kDynamic when batch-dependent
    Index cols;
    double scalar = 0.0;  // scale factor or log floor
    bool transpose_b = false;
    bool bound = false;  // input with a bound value
  };

  NodeId push(Node node);
  void check_id(NodeId id) const;
  std::string describe(NodeId id) const;
  void evaluate(std::size_t i);
  void propagate(std::size_t i);

  std::vector<Node> nodes_;
  std::vector<Matrix> values_;
  std::vector<Matrix> adjoints_;
  std::vector<Matrix> bound_values_;
  std::vector<NodeId> parameters_;
  std::vector<std::vector<Index>> argmax_;  // per max_rows node
  std::size_t zero_rows_ = 0;
  bool forward_done_ = false;
};

struct OptimizerState {
  std::vector<Matrix> velocity;
  double learning_rate = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

OptimizerState make_optimizer_state(const Graph& graph, double learning_rate,
                                    double momentum, double weight_decay);

struct ParameterSlot {
  std::string name;
  Matrix* value;
  const Matrix* grad;
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
void sgd_step(std::span<const ParameterSlot> params, OptimizerState& state);

// Applies sgd_step to every graph parameter using the given gradients.
void sgd_step(Graph& graph, std::span<const Matrix> grads, OptimizerState& state);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates at a kink (one-sided slopes disagree)
};

// Central-difference check of every parameter coordinate of `graph` against
// the analytic adjoints of `loss`. `feed` is replayed for every evaluation.
GradCheckReport finite_diff_check(Graph& graph, NodeId loss, const Feed& feed,
                                  double eps = 1e-5);

// Same check for a free scalar function with a caller-supplied gradient.
GradCheckReport finite_diff_check(const std::function<double(const Matrix&)>& f,
                                  const Matrix& analytic_grad, const Matrix& point,
                                  double eps = 1e-5);

}  // namespace startup

#endif  // STARTUP_DIFFCORE_HPP_
