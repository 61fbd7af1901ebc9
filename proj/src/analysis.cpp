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

#include "startup/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "startup/error.hpp"

namespace startup {

void Partition::validate() const {
  for (int a : assignments) {
    if (a < 0 || a >= cluster_count) {
      throw ContractError("partition: assignment " + std::to_string(a) + " outside [0, " +
                          std::to_string(cluster_count) + ")");
    }
  }
}

Partition make_partition(std::span<const int> labels) {
  Partition p;
  p.assignments.assign(labels.begin(), labels.end());
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw ContractError("partition: negative label");
    max_label = std::max(max_label, l);
  }
  p.cluster_count = max_label + 1;
  return p;
}

Partition induced_grouping(const ModelBundle& teacher, const Dataset& data) {
  if (data.dim() != teacher.arch.input_dim) {
    throw DimensionError("induced_grouping: data width does not match the teacher");
  }
  Matrix z = logits(teacher, embed(teacher, data.features));
  Partition p;
  p.cluster_count = static_cast<int>(teacher.arch.num_classes);
  p.assignments.resize(static_cast<std::size_t>(z.rows()));
  for (Index r = 0; r < z.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < z.cols(); ++c) {
      if (z(r, c) > z(r, best)) best = c;
    }
    p.assignments[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return p;
}

namespace {

// Marginal counts of the non-empty clusters plus the dense contingency table.
struct Contingency {
  std::vector<long> rows;  // a_i
  std::vector<long> cols;  // b_j
  std::vector<std::vector<long>> cells;
  long n = 0;
};

Contingency contingency(const Partition& u, const Partition& v) {
  std::vector<int> u_index(static_cast<std::size_t>(u.cluster_count), -1);
  std::vector<int> v_index(static_cast<std::size_t>(v.cluster_count), -1);
  Contingency t;
  for (std::size_t k = 0; k < u.size(); ++k) {
    int& ui = u_index[static_cast<std::size_t>(u.assignments[k])];
    int& vi = v_index[static_cast<std::size_t>(v.assignments[k])];
    if (ui < 0) {
      ui = static_cast<int>(t.rows.size());
      t.rows.push_back(0);
      t.cells.emplace_back(t.cols.size(), 0);
    }
    if (vi < 0) {
      vi = static_cast<int>(t.cols.size());
      t.cols.push_back(0);
      for (auto& row : t.cells) row.push_back(0);
    }
    ++t.rows[static_cast<std::size_t>(ui)];
    ++t.cols[static_cast<std::size_t>(vi)];
    ++t.cells[static_cast<std::size_t>(ui)][static_cast<std::size_t>(vi)];
  }
  t.n = static_cast<long>(u.size());
  return t;
}

double entropy(const std::vector<long>& counts, long n) {
  double h = 0.0;
  for (long c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

// E[MI] under the permutation model: cell (i, j) is hypergeometric with
// population N, a_i successes and b_j draws.
double expected_mutual_information(const Contingency& t) {
  double n = static_cast<double>(t.n);
  std::vector<double> lgam(static_cast<std::size_t>(t.n) + 2);
  for (std::size_t k = 0; k < lgam.size(); ++k) lgam[k] = std::lgamma(static_cast<double>(k) + 1.0);
  auto lf = [&](long k) { return lgam[static_cast<std::size_t>(k)]; };  // log k!
  double emi = 0.0;
  for (long a : t.rows) {
    for (long b : t.cols) {
      long lo = std::max(1L, a + b - t.n);
      long hi = std::min(a, b);
      double fixed = lf(a) + lf(b) + lf(t.n - a) + lf(t.n - b) - lf(t.n);
      for (long k = lo; k <= hi; ++k) {
        double log_p = fixed - lf(k) - lf(a - k) - lf(b - k) - lf(t.n - a - b + k);
        double term = (static_cast<double>(k) / n) *
                      std::log(n * static_cast<double>(k) / (static_cast<double>(a) * static_cast<double>(b)));
        emi += term * std::exp(log_p);
      }
    }
  }
  return emi;
}

}  // namespace

ClusterAgreement cluster_agreement(const Partition& u, const Partition& v) {
  if (u.size() != v.size()) {
    throw ContractError("AMI: partitions have different lengths (" + std::to_string(u.size()) +
                        " vs " + std::to_string(v.size()) + ")");
  }
  u.validate();
  v.validate();
  ClusterAgreement out;
  if (u.size() == 0) return out;
  Contingency t = contingency(u, v);
  double n = static_cast<double>(t.n);
  out.entropy_u = entropy(t.rows, t.n);
  out.entropy_v = entropy(t.cols, t.n);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.cols.size(); ++j) {
      long c = t.cells[i][j];
      if (c == 0) continue;
      out.mutual_information += (static_cast<double>(c) / n) *
                                std::log(n * static_cast<double>(c) /
                                         (static_cast<double>(t.rows[i]) * static_cast<double>(t.cols[j])));
    }
  }
  out.expected_mutual_information = expected_mutual_information(t);
  double denom = 0.5 * (out.entropy_u + out.entropy_v) - out.expected_mutual_information;
  if (t.rows.size() <= 1 && t.cols.size() <= 1) {
    out.ami = 0.0;
  } else if (std::abs(denom) < 1e-15) {
    out.ami = 0.0;
  } else {
    out.ami = (out.mutual_information - out.expected_mutual_information) / denom;
  }
  return out;
}

double adjusted_mutual_information(const Partition& u, const Partition& v) {
  return cluster_agreement(u, v).ami;
}

void export_embeddings(const ModelBundle& bundle, const Dataset& data,
                       const std::filesystem::path& path) {
  Matrix e = embed(bundle, data.features);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "id,label";
  for (Index k = 0; k < e.cols(); ++k) out << ",e" << k;
  out << "\n";
  char buf[64];
  for (Index r = 0; r < e.rows(); ++r) {
    out << r << ',';
    if (data.labels) out << (*data.labels)[static_cast<std::size_t>(r)];
    for (Index k = 0; k < e.cols(); ++k) {
      auto res = std::to_chars(buf, buf + sizeof buf, e(r, k));
      out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace startup
