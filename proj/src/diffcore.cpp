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

#include "startup/diffcore.hpp"

#include <algorithm>
#include <cmath>

#include "startup/error.hpp"

namespace startup {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMultiply: return "multiply";
    case Op::kScale: return "scale";
    case Op::kRelu: return "relu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kSumRows: return "sum_rows";
    case Op::kMean: return "mean";
    case Op::kMaxRows: return "max_rows";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kL2NormalizeRows: return "l2_normalize_rows";
    case Op::kConcatRows: return "concat_rows";
  }
  return "?";
}

namespace {

std::string extent_str(Index n) { return n == kDynamic ? std::string("?") : std::to_string(n); }

std::string shape_str(Index rows, Index cols) { return extent_str(rows) + "x" + extent_str(cols); }

bool compatible(Index a, Index b) { return a == kDynamic || b == kDynamic || a == b; }

Index merge(Index a, Index b) { return a == kDynamic ? b : a; }

}  // namespace

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) check_id(in);
  nodes_.push_back(std::move(node));
  values_.emplace_back();
  adjoints_.emplace_back();
  bound_values_.emplace_back();
  argmax_.emplace_back();
  forward_done_ = false;
  return NodeId{nodes_.size() - 1};
}

void Graph::check_id(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw ContractError("node id " + std::to_string(id.index) + " does not belong to this graph");
  }
}

std::string Graph::describe(NodeId id) const {
  const Node& n = nodes_[id.index];
  std::string s = std::string(op_name(n.op)) + " node #" + std::to_string(id.index);
  if (!n.name.empty()) s += " '" + n.name + "'";
  return s;
}

NodeId Graph::input(std::string name, Index rows, Index cols) {
  if ((cols < 0 && cols != kDynamic) || (rows < 0 && rows != kDynamic)) {
    throw DimensionError("input '" + name + "' declared with negative shape");
  }
  return push(Node{Op::kInput, std::move(name), {}, rows, cols});
}

NodeId Graph::constant(Matrix value, std::string name) {
  NodeId id = push(Node{Op::kInput, std::move(name), {}, value.rows(), value.cols()});
  nodes_[id.index].bound = true;
  bound_values_[id.index] = std::move(value);
  return id;
}

NodeId Graph::parameter(std::string name, Matrix value) {
  NodeId id = push(Node{Op::kParameter, std::move(name), {}, value.rows(), value.cols()});
  values_[id.index] = std::move(value);
  parameters_.push_back(id);
  return id;
}

NodeId Graph::matmul(NodeId a, NodeId b, bool transpose_b) {
  check_id(a);
  check_id(b);
  const Node& na = nodes_[a.index];
  const Node& nb = nodes_[b.index];
  Index inner_b = transpose_b ? nb.cols : nb.rows;
  Index out_cols = transpose_b ? nb.rows : nb.cols;
  if (!compatible(na.cols, inner_b)) {
    throw DimensionError("matmul: " + describe(a) + " is " + shape_str(na.rows, na.cols) +
                         " but " + describe(b) + " contributes inner size " +
                         std::to_string(inner_b));
  }
  Node n{Op::kMatMul, {}, {a, b}, na.rows, out_cols};
  n.transpose_b = transpose_b;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Node& na = nodes_[a.index];
  const Node& nb = nodes_[b.index];
  bool broadcast = nb.rows == 1 && na.rows != 1;
  if (!compatible(na.cols, nb.cols) || (!broadcast && !compatible(na.rows, nb.rows))) {
    throw DimensionError("add: " + describe(a) + " is " + shape_str(na.rows, na.cols) + ", " +
                         describe(b) + " is " + shape_str(nb.rows, nb.cols));
  }
  return push(Node{Op::kAdd, {}, {a, b}, merge(na.rows, broadcast ? na.rows : nb.rows),
                   merge(na.cols, nb.cols)});
}

NodeId Graph::multiply(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Node& na = nodes_[a.index];
  const Node& nb = nodes_[b.index];
  if (!compatible(na.cols, nb.cols) || !compatible(na.rows, nb.rows)) {
    throw DimensionError("multiply: " + describe(a) + " is " + shape_str(na.rows, na.cols) +
                         ", " + describe(b) + " is " + shape_str(nb.rows, nb.cols));
  }
  return push(Node{Op::kMultiply, {}, {a, b}, merge(na.rows, nb.rows), merge(na.cols, nb.cols)});
}

NodeId Graph::scale(NodeId a, double factor) {
  check_id(a);
  Node n{Op::kScale, {}, {a}, nodes_[a.index].rows, nodes_[a.index].cols};
  n.scalar = factor;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  check_id(a);
  return push(Node{Op::kRelu, {}, {a}, nodes_[a.index].rows, nodes_[a.index].cols});
}

NodeId Graph::exp(NodeId a) {
  check_id(a);
  return push(Node{Op::kExp, {}, {a}, nodes_[a.index].rows, nodes_[a.index].cols});
}

NodeId Graph::log(NodeId a, double floor) {
  check_id(a);
  if (!(floor >= 0.0)) throw ContractError("log floor must be non-negative");
  Node n{Op::kLog, {}, {a}, nodes_[a.index].rows, nodes_[a.index].cols};
  n.scalar = floor;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  check_id(a);
  return push(Node{Op::kSum, {}, {a}, 1, 1});
}

NodeId Graph::sum_rows(NodeId a) {
  check_id(a);
  return push(Node{Op::kSumRows, {}, {a}, nodes_[a.index].rows, 1});
}

NodeId Graph::mean(NodeId a) {
  check_id(a);
  return push(Node{Op::kMean, {}, {a}, 1, 1});
}

NodeId Graph::max_rows(NodeId a) {
  check_id(a);
  if (nodes_[a.index].cols == 0) throw DimensionError("max_rows over zero columns: " + describe(a));
  return push(Node{Op::kMaxRows, {}, {a}, nodes_[a.index].rows, 1});
}

NodeId Graph::softmax_rows(NodeId a) {
  check_id(a);
  if (nodes_[a.index].cols == 0) {
    throw DimensionError("softmax_rows over zero columns: " + describe(a));
  }
  return push(Node{Op::kSoftmaxRows, {}, {a}, nodes_[a.index].rows, nodes_[a.index].cols});
}

NodeId Graph::l2_normalize_rows(NodeId a) {
  check_id(a);
  return push(Node{Op::kL2NormalizeRows, {}, {a}, nodes_[a.index].rows, nodes_[a.index].cols});
}

NodeId Graph::concat_rows(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Node& na = nodes_[a.index];
  const Node& nb = nodes_[b.index];
  if (!compatible(na.cols, nb.cols)) {
    throw DimensionError("concat_rows: " + describe(a) + " has " + extent_str(na.cols) +
                         " columns, " + describe(b) + " has " + extent_str(nb.cols));
  }
  Index rows = (na.rows == kDynamic || nb.rows == kDynamic) ? kDynamic : na.rows + nb.rows;
  return push(Node{Op::kConcatRows, {}, {a, b}, rows, merge(na.cols, nb.cols)});
}

void Graph::forward(Feed feed) {
  auto& given = feed.values();
  for (const auto& [name, value] : given) {
    auto it = std::find_if(nodes_.begin(), nodes_.end(), [&](const Node& n) {
      return n.op == Op::kInput && n.name == name;
    });
    if (it == nodes_.end()) throw ContractError("feed names unknown input '" + name + "'");
  }
  zero_rows_ = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.op == Op::kInput) {
      auto it = n.name.empty() ? given.end() : given.find(n.name);
      if (it != given.end()) {
        values_[i] = std::move(it->second);
      } else if (n.bound) {
        values_[i] = bound_values_[i];
      } else {
        throw ContractError("no value fed for " + describe(NodeId{i}));
      }
      const Matrix& v = values_[i];
      if ((n.rows != kDynamic && v.rows() != n.rows) || (n.cols != kDynamic && v.cols() != n.cols)) {
        throw DimensionError(describe(NodeId{i}) + " expects " + shape_str(n.rows, n.cols) +
                             ", got " + shape_str(v.rows(), v.cols()));
      }
      if (!v.allFinite()) throw NumericError("non-finite value fed to " + describe(NodeId{i}));
      continue;
    }
    evaluate(i);
  }
  forward_done_ = true;
}

void Graph::evaluate(std::size_t i) {
  const Node& n = nodes_[i];
  auto in = [&](std::size_t k) -> const Matrix& { return values_[n.inputs[k].index]; };
  Matrix& out = values_[i];
  switch (n.op) {
    case Op::kInput:
    case Op::kParameter:
      break;
    case Op::kMatMul: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (n.transpose_b) {
        if (a.cols() != b.cols()) {
          throw DimensionError(describe(NodeId{i}) + ": inner sizes " + std::to_string(a.cols()) +
                               " and " + std::to_string(b.cols()) + " differ");
        }
        out.noalias() = a * b.transpose();
      } else {
        if (a.cols() != b.rows()) {
          throw DimensionError(describe(NodeId{i}) + ": inner sizes " + std::to_string(a.cols()) +
                               " and " + std::to_string(b.rows()) + " differ");
        }
        out.noalias() = a * b;
      }
      break;
    }
    case Op::kAdd: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (a.cols() != b.cols()) {
        throw DimensionError(describe(NodeId{i}) + ": column counts " + std::to_string(a.cols()) +
                             " and " + std::to_string(b.cols()) + " differ");
      }
      if (a.rows() == b.rows()) {
        out = a + b;
      } else if (b.rows() == 1) {
        out = a.rowwise() + b.row(0);
      } else {
        throw DimensionError(describe(NodeId{i}) + ": row counts " + std::to_string(a.rows()) +
                             " and " + std::to_string(b.rows()) + " differ");
      }
      break;
    }
    case Op::kMultiply: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(describe(NodeId{i}) + ": shapes " + shape_str(a.rows(), a.cols()) +
                             " and " + shape_str(b.rows(), b.cols()) + " differ");
      }
      out = a.cwiseProduct(b);
      break;
    }
    case Op::kScale:
      out = n.scalar * in(0);
      break;
    case Op::kRelu:
      out = in(0).cwiseMax(0.0);
      break;
    case Op::kExp:
      out = in(0).array().exp().matrix();
      break;
    case Op::kLog: {
      const Matrix& a = in(0);
      if (n.scalar == 0.0) {
        if ((a.array() <= 0.0).any()) {
          throw NumericError(describe(NodeId{i}) + ": log of a non-positive value");
        }
        out = a.array().log().matrix();
      } else {
        out = a.array().max(n.scalar).log().matrix();
      }
      break;
    }
    case Op::kSum:
      out.resize(1, 1);
      out(0, 0) = in(0).sum();
      break;
    case Op::kSumRows:
      out = in(0).rowwise().sum();
      break;
    case Op::kMean: {
      const Matrix& a = in(0);
      if (a.size() == 0) throw ContractError(describe(NodeId{i}) + ": mean of an empty matrix");
      out.resize(1, 1);
      out(0, 0) = a.mean();
      break;
    }
    case Op::kMaxRows: {
      const Matrix& a = in(0);
      out.resize(a.rows(), 1);
      auto& arg = argmax_[i];
      arg.assign(static_cast<std::size_t>(a.rows()), 0);
      for (Index r = 0; r < a.rows(); ++r) {
        Index best = 0;
        for (Index c = 1; c < a.cols(); ++c) {
          if (a(r, c) > a(r, best)) best = c;
        }
        arg[static_cast<std::size_t>(r)] = best;
        out(r, 0) = a(r, best);
      }
      break;
    }
    case Op::kSoftmaxRows: {
      const Matrix& a = in(0);
      Eigen::VectorXd row_max = a.rowwise().maxCoeff();
      out = (a.colwise() - row_max).array().exp().matrix();
      Eigen::VectorXd denom = out.rowwise().sum();
      out = out.array().colwise() / denom.array();
      break;
    }
    case Op::kL2NormalizeRows: {
      const Matrix& a = in(0);
      out.resize(a.rows(), a.cols());
      for (Index r = 0; r < a.rows(); ++r) {
        double norm = a.row(r).norm();
        if (norm == 0.0) {
          out.row(r).setZero();
          ++zero_rows_;
        } else {
          out.row(r) = a.row(r) / norm;
        }
      }
      break;
    }
    case Op::kConcatRows: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      if (a.cols() != b.cols()) {
        throw DimensionError(describe(NodeId{i}) + ": column counts " + std::to_string(a.cols()) +
                             " and " + std::to_string(b.cols()) + " differ");
      }
      out.resize(a.rows() + b.rows(), a.cols());
      out.topRows(a.rows()) = a;
      out.bottomRows(b.rows()) = b;
      break;
    }
  }
}

std::vector<Matrix> Graph::backward(NodeId loss) {
  check_id(loss);
  if (!forward_done_) throw ContractError("backward called before forward");
  const Matrix& lv = values_[loss.index];
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward requires a scalar loss; " + describe(loss) + " is " +
                        shape_str(lv.rows(), lv.cols()));
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    adjoints_[i].setZero(values_[i].rows(), values_[i].cols());
  }
  adjoints_[loss.index](0, 0) = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) propagate(i);

  std::vector<Matrix> grads;
  grads.reserve(parameters_.size());
  for (NodeId p : parameters_) grads.push_back(adjoints_[p.index]);
  return grads;
}

void Graph::propagate(std::size_t i) {
  const Node& n = nodes_[i];
  const Matrix& g = adjoints_[i];
  const Matrix& y = values_[i];
  auto in = [&](std::size_t k) -> const Matrix& { return values_[n.inputs[k].index]; };
  auto adj = [&](std::size_t k) -> Matrix& { return adjoints_[n.inputs[k].index]; };
  switch (n.op) {
    case Op::kInput:
    case Op::kParameter:
      break;
    case Op::kMatMul:
      if (n.transpose_b) {
        adj(0).noalias() += g * in(1);
        adj(1).noalias() += g.transpose() * in(0);
      } else {
        adj(0).noalias() += g * in(1).transpose();
        adj(1).noalias() += in(0).transpose() * g;
      }
      break;
    case Op::kAdd:
      adj(0) += g;
      if (in(1).rows() == g.rows()) {
        adj(1) += g;
      } else {
        adj(1) += g.colwise().sum();
      }
      break;
    case Op::kMultiply:
      adj(0) += g.cwiseProduct(in(1));
      adj(1) += g.cwiseProduct(in(0));
      break;
    case Op::kScale:
      adj(0) += n.scalar * g;
      break;
    case Op::kRelu:
      adj(0).array() += (in(0).array() > 0.0).select(g.array(), 0.0);
      break;
    case Op::kExp:
      adj(0) += g.cwiseProduct(y);
      break;
    case Op::kLog: {
      const Matrix& a = in(0);
      if (n.scalar == 0.0) {
        adj(0).array() += g.array() / a.array();
      } else {
        adj(0).array() += (a.array() > n.scalar).select(g.array() / a.array(), 0.0);
      }
      break;
    }
    case Op::kSum:
      adj(0).array() += g(0, 0);
      break;
    case Op::kSumRows:
      adj(0).colwise() += g.col(0);
      break;
    case Op::kMean:
      adj(0).array() += g(0, 0) / static_cast<double>(in(0).size());
      break;
    case Op::kMaxRows: {
      const auto& arg = argmax_[i];
      Matrix& a = adj(0);
      for (Index r = 0; r < g.rows(); ++r) a(r, arg[static_cast<std::size_t>(r)]) += g(r, 0);
      break;
    }
    case Op::kSoftmaxRows: {
      Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
      adj(0).array() += y.array() * (g.colwise() - dot).array();
      break;
    }
    case Op::kL2NormalizeRows: {
      const Matrix& a = in(0);
      Matrix& da = adj(0);
      for (Index r = 0; r < a.rows(); ++r) {
        double norm = a.row(r).norm();
        if (norm == 0.0) continue;
        double dot = y.row(r).dot(g.row(r));
        da.row(r) += (g.row(r) - dot * y.row(r)) / norm;
      }
      break;
    }
    case Op::kConcatRows: {
      Index top = in(0).rows();
      adj(0) += g.topRows(top);
      adj(1) += g.bottomRows(g.rows() - top);
      break;
    }
  }
}

const Matrix& Graph::value(NodeId id) const {
  check_id(id);
  return values_[id.index];
}

const Matrix& Graph::adjoint(NodeId id) const {
  check_id(id);
  return adjoints_[id.index];
}

double Graph::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) throw ContractError(describe(id) + " is not scalar");
  return v(0, 0);
}

const std::string& Graph::name(NodeId id) const {
  check_id(id);
  return nodes_[id.index].name;
}

Index Graph::cols(NodeId id) const {
  check_id(id);
  return nodes_[id.index].cols;
}

Op Graph::op(NodeId id) const {
  check_id(id);
  return nodes_[id.index].op;
}

std::span<const NodeId> Graph::inputs_of(NodeId id) const {
  check_id(id);
  return nodes_[id.index].inputs;
}

Matrix& Graph::mutable_parameter(NodeId id) {
  check_id(id);
  if (nodes_[id.index].op != Op::kParameter) throw ContractError(describe(id) + " is not a parameter");
  return values_[id.index];
}

void Graph::set_parameter(NodeId id, const Matrix& value) {
  Matrix& p = mutable_parameter(id);
  if (p.rows() != value.rows() || p.cols() != value.cols()) {
    throw DimensionError(describe(id) + " expects " + shape_str(p.rows(), p.cols()) + ", got " +
                         shape_str(value.rows(), value.cols()));
  }
  p = value;
}

OptimizerState make_optimizer_state(const Graph& graph, double learning_rate, double momentum,
                                    double weight_decay) {
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("optimizer: need lr >= 0, momentum in [0,1), weight_decay >= 0");
  }
  OptimizerState state;
  state.learning_rate = learning_rate;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  for (NodeId p : graph.parameters()) {
    const Matrix& v = graph.value(p);
    state.velocity.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
  return state;
}

void sgd_step(std::span<const ParameterSlot> params, OptimizerState& state) {
  if (params.size() != state.velocity.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(state.velocity.size()) + " velocity buffers");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParameterSlot& slot = params[i];
    Matrix& v = state.velocity[i];
    if (slot.value->rows() != slot.grad->rows() || slot.value->cols() != slot.grad->cols() ||
        v.rows() != slot.value->rows() || v.cols() != slot.value->cols()) {
      throw DimensionError("sgd_step: shape mismatch for parameter '" + slot.name + "'");
    }
    if (!slot.grad->allFinite()) {
      throw NumericError("sgd_step: non-finite gradient for parameter '" + slot.name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParameterSlot& slot = params[i];
    Matrix& v = state.velocity[i];
    v = state.momentum * v + *slot.grad + state.weight_decay * *slot.value;
    *slot.value -= state.learning_rate * v;
  }
}

void sgd_step(Graph& graph, std::span<const Matrix> grads, OptimizerState& state) {
  auto params = graph.parameters();
  if (grads.size() != params.size()) {
    throw DimensionError("sgd_step: gradient count does not match parameter count");
  }
  std::vector<ParameterSlot> slots;
  slots.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    slots.push_back({graph.name(params[i]), &graph.mutable_parameter(params[i]), &grads[i]});
  }
  sgd_step(slots, state);
}

namespace {

struct CoordinateCheck {
  bool kink;
  double rel_error;
};

// One-sided slopes that disagree by more than curvature alone explains
// indicate a kink; such coordinates are skipped.
CoordinateCheck check_coordinate(double analytic, double f_plus, double f_zero, double f_minus,
                                 double eps) {
  for (double f : {f_plus, f_zero, f_minus}) {
    if (!std::isfinite(f)) throw NumericError("finite_diff_check: non-finite evaluation");
  }
  double right = (f_plus - f_zero) / eps;
  double left = (f_zero - f_minus) / eps;
  double scale = std::max({std::abs(right), std::abs(left), 1.0});
  if (std::abs(right - left) > 1e-2 * scale) return {true, 0.0};
  double central = (f_plus - f_minus) / (2.0 * eps);
  double rel = std::abs(analytic - central) / std::max(1e-12, std::abs(analytic) + std::abs(central));
  return {false, rel};
}

}  // namespace

GradCheckReport finite_diff_check(Graph& graph, NodeId loss, const Feed& feed, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
  graph.forward(feed);
  std::vector<Matrix> grads = graph.backward(loss);
  double f_zero = graph.scalar(loss);
  GradCheckReport report;
  auto params = graph.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& value = graph.mutable_parameter(params[p]);
    for (Index k = 0; k < value.size(); ++k) {
      double original = value.data()[k];
      value.data()[k] = original + eps;
      graph.forward(feed);
      double f_plus = graph.scalar(loss);
      value.data()[k] = original - eps;
      graph.forward(feed);
      double f_minus = graph.scalar(loss);
      value.data()[k] = original;
      CoordinateCheck c = check_coordinate(grads[p].data()[k], f_plus, f_zero, f_minus, eps);
      if (c.kink) {
        ++report.skipped;
      } else {
        ++report.checked;
        report.max_relative_error = std::max(report.max_relative_error, c.rel_error);
      }
    }
  }
  graph.forward(feed);
  return report;
}

GradCheckReport finite_diff_check(const std::function<double(const Matrix&)>& f,
                                  const Matrix& analytic_grad, const Matrix& point, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
  if (analytic_grad.rows() != point.rows() || analytic_grad.cols() != point.cols()) {
    throw DimensionError("finite_diff_check: gradient shape differs from point shape");
  }
  GradCheckReport report;
  Matrix x = point;
  double f_zero = f(x);
  for (Index k = 0; k < x.size(); ++k) {
    double original = x.data()[k];
    x.data()[k] = original + eps;
    double f_plus = f(x);
    x.data()[k] = original - eps;
    double f_minus = f(x);
    x.data()[k] = original;
    CoordinateCheck c = check_coordinate(analytic_grad.data()[k], f_plus, f_zero, f_minus, eps);
    if (c.kink) {
      ++report.skipped;
    } else {
      ++report.checked;
      report.max_relative_error = std::max(report.max_relative_error, c.rel_error);
    }
  }
  return report;
}

}  // namespace startup
