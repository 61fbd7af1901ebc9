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

#include "startup/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "startup/error.hpp"

namespace startup {

void Dataset::validate() const {
  if (labels) {
    if (labels->size() != size()) throw DataError("dataset: label count differs from row count");
    for (int l : *labels) {
      if (l < 0 || l >= class_count) {
        throw DataError("dataset '" + domain_tag + "': label " + std::to_string(l) +
                        " outside [0, " + std::to_string(class_count) + ")");
      }
    }
  }
  if (!reference_labels.empty() && reference_labels.size() != size()) {
    throw DataError("dataset: reference label count differs from row count");
  }
  if (!features.allFinite()) throw NumericError("dataset '" + domain_tag + "' has non-finite features");
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.class_count = data.class_count;
  out.domain_tag = data.domain_tag;
  out.features.resize(static_cast<Index>(rows.size()), data.dim());
  std::vector<int> labels, reference;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.size()) throw ContractError("subset: row index out of range");
    out.features.row(static_cast<Index>(i)) = data.features.row(static_cast<Index>(rows[i]));
    if (data.labels) labels.push_back((*data.labels)[rows[i]]);
    if (!data.reference_labels.empty()) reference.push_back(data.reference_labels[rows[i]]);
  }
  if (data.labels) out.labels = std::move(labels);
  out.reference_labels = std::move(reference);
  return out;
}

void DomainSpec::validate() const {
  if (class_count < 1 || per_class_count < 1 || input_dim < 1 || basis_count < 1) {
    throw ConfigError("domain '" + tag + "': counts and dims must be >= 1");
  }
  if (!(mean_scale > 0.0)) throw ConfigError("domain '" + tag + "': mean scale must be > 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("domain '" + tag + "': sigma must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("domain '" + tag + "': alpha must be in [0,1]");
  if (basis_count > input_dim) {
    throw ConfigError("domain '" + tag + "': basis_count exceeds input_dim");
  }
  if (alpha < 1.0 && basis_count >= input_dim) {
    throw ConfigError("domain '" + tag + "': no room for fresh directions (basis_count == input_dim)");
  }
  if (!alignment.empty()) {
    if (static_cast<int>(alignment.size()) != class_count) {
      throw ConfigError("domain '" + tag + "': alignment must list one base direction per class");
    }
    for (int a : alignment) {
      if (a < 0 || a >= basis_count) {
        throw ConfigError("domain '" + tag + "': alignment entry " + std::to_string(a) +
                          " outside [0, " + std::to_string(basis_count) + ")");
      }
    }
  }
}

int DomainSpec::aligned_direction(int cls) const {
  return alignment.empty() ? cls % basis_count : alignment[static_cast<std::size_t>(cls)];
}

Matrix base_directions(std::uint64_t basis_seed, int basis_count, Index dim) {
  if (basis_count < 1 || basis_count > dim) throw ConfigError("base_directions: need 1 <= count <= dim");
  Rng rng(derive_seed(basis_seed, 0xBA5E));
  std::normal_distribution<double> normal;
  Matrix g(dim, basis_count);
  for (Index c = 0; c < basis_count; ++c) {
    for (Index r = 0; r < dim; ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, basis_count);
  return q.transpose();
}

Matrix class_means(const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  Matrix basis = base_directions(spec.basis_seed, spec.basis_count, spec.input_dim);
  Rng rng(derive_seed(seed, 0xF2E5));
  std::normal_distribution<double> normal;
  Matrix means(spec.class_count, spec.input_dim);
  for (int c = 0; c < spec.class_count; ++c) {
    RowVector mean = spec.alpha * basis.row(spec.aligned_direction(c));
    if (spec.alpha < 1.0) {
      RowVector fresh(spec.input_dim);
      double norm = 0.0;
      while (norm < 1e-8) {
        for (Index k = 0; k < spec.input_dim; ++k) fresh(k) = normal(rng);
        fresh -= (basis * fresh.transpose()).transpose() * basis;
        norm = fresh.norm();
      }
      mean += (1.0 - spec.alpha) * fresh / norm;
    }
    means.row(c) = spec.mean_scale * mean;
  }
  return means;
}

Dataset generate_domain(const DomainSpec& spec, std::uint64_t seed) {
  Matrix means = class_means(spec, seed);
  Rng rng(derive_seed(seed, 0x5A3B));
  std::normal_distribution<double> normal;
  Dataset data;
  data.class_count = spec.class_count;
  data.domain_tag = spec.tag;
  Index n = static_cast<Index>(spec.class_count) * spec.per_class_count;
  data.features.resize(n, spec.input_dim);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  Index row = 0;
  for (int c = 0; c < spec.class_count; ++c) {
    for (int i = 0; i < spec.per_class_count; ++i, ++row) {
      for (Index k = 0; k < spec.input_dim; ++k) {
        data.features(row, k) = means(c, k) + spec.noise_sigma * normal(rng);
      }
      labels.push_back(c);
    }
  }
  data.labels = std::move(labels);
  return data;
}

UnlabeledSplit split_unlabeled(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split_unlabeled: fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  std::vector<std::size_t> unlabeled, eval;
  const std::vector<int>& truth = data.truth();
  if (truth.empty()) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(all.size())));
    unlabeled.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
    eval.assign(all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
  } else {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < truth.size(); ++i) by_class[truth[i]].push_back(i);
    for (auto& [cls, rows] : by_class) {
      std::shuffle(rows.begin(), rows.end(), rng);
      auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
      unlabeled.insert(unlabeled.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
      eval.insert(eval.end(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end());
    }
  }
  if (unlabeled.empty() || eval.empty()) {
    throw ConfigError("split_unlabeled: fraction " + std::to_string(fraction) +
                      " leaves one side empty");
  }
  std::sort(unlabeled.begin(), unlabeled.end());
  std::sort(eval.begin(), eval.end());

  UnlabeledSplit split;
  split.unlabeled = subset(data, unlabeled);
  if (split.unlabeled.labels) {
    split.unlabeled.reference_labels = std::move(*split.unlabeled.labels);
    split.unlabeled.labels.reset();
  }
  split.eval_pool = subset(data, eval);
  split.unlabeled_rows = std::move(unlabeled);
  split.eval_rows = std::move(eval);
  return split;
}

void AugmentPolicy::validate() const {
  if (!(noise_sigma >= 0.0)) throw ConfigError("augment: noise sigma must be >= 0");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw ConfigError("augment: dropout probability must lie in [0, 1)");
  }
  if (!(jitter_lo > 0.0 && jitter_lo <= jitter_hi)) {
    throw ConfigError("augment: jitter range needs 0 < lo <= hi");
  }
}

RowVector augment(const RowVector& x, const AugmentPolicy& policy, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  double jitter = policy.jitter_lo + (policy.jitter_hi - policy.jitter_lo) * unit(rng);
  RowVector out(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    double keep = unit(rng) < policy.dropout_prob ? 0.0 : 1.0;
    out(k) = jitter * x(k) * keep + policy.noise_sigma * normal(rng);
  }
  return out;
}

Matrix augment_rows(const Matrix& x, const AugmentPolicy& policy, Rng& rng) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) out.row(r) = augment(x.row(r), policy, rng);
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, bool has_labels,
                     std::optional<int> class_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool header_seen = false;
  std::vector<std::vector<double>> rows;
  std::vector<std::optional<long>> labels;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    auto fields = split_fields(view);
    if (!header_seen) {
      if (fields.empty() || fields[0] != "label" || fields.size() < 2) {
        throw ParseError("header must be 'label,f0,...,f{D-1}'", line_no);
      }
      for (std::size_t k = 1; k < fields.size(); ++k) {
        if (fields[k] != "f" + std::to_string(k - 1)) {
          throw ParseError("header column " + std::to_string(k) + " should be 'f" +
                               std::to_string(k - 1) + "'", line_no);
        }
      }
      dim = fields.size() - 1;
      header_seen = true;
      continue;
    }
    if (fields.size() != dim + 1) {
      throw ParseError("expected " + std::to_string(dim + 1) + " fields, got " +
                           std::to_string(fields.size()), line_no);
    }
    if (fields[0].empty()) {
      if (has_labels) throw ParseError("missing label in a labeled dataset", line_no);
      labels.emplace_back();
    } else {
      long value = 0;
      auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), value);
      if (res.ec != std::errc() || res.ptr != fields[0].data() + fields[0].size()) {
        throw ParseError("label '" + std::string(fields[0]) + "' is not an integer", line_no);
      }
      if (value < 0 || (class_count && value >= *class_count)) {
        throw ParseError("label " + std::to_string(value) + " out of range", line_no);
      }
      labels.emplace_back(value);
    }
    std::vector<double> row(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      std::string_view f = fields[k + 1];
      if (!f.empty() && f.front() == '+') f.remove_prefix(1);
      auto res = std::from_chars(f.data(), f.data() + f.size(), row[k]);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size() ||
          !std::isfinite(row[k])) {
        throw ParseError("field " + std::to_string(k + 1) + " ('" + std::string(fields[k + 1]) +
                             "') is not a finite number", line_no);
      }
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw ParseError("empty dataset file", line_no);

  Dataset data;
  data.domain_tag = path.stem().string();
  data.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < dim; ++k) data.features(static_cast<Index>(r), static_cast<Index>(k)) = rows[r][k];
  }
  bool all_present = std::all_of(labels.begin(), labels.end(), [](auto& l) { return l.has_value(); });
  long max_label = -1;
  for (const auto& l : labels) {
    if (l) max_label = std::max(max_label, *l);
  }
  data.class_count = class_count ? *class_count : static_cast<int>(max_label + 1);
  if (all_present && !labels.empty()) {
    std::vector<int> values;
    for (const auto& l : labels) values.push_back(static_cast<int>(*l));
    if (has_labels) {
      data.labels = std::move(values);
    } else {
      data.reference_labels = std::move(values);
    }
  } else if (has_labels) {
    data.labels = std::vector<int>{};
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "label";
  for (Index k = 0; k < data.dim(); ++k) out << ",f" << k;
  out << "\n";
  char buf[64];
  for (Index r = 0; r < data.features.rows(); ++r) {
    if (data.labels) out << (*data.labels)[static_cast<std::size_t>(r)];
    for (Index k = 0; k < data.dim(); ++k) {
      auto res = std::to_chars(buf, buf + sizeof buf, data.features(r, k));
      out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace startup
