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

#ifndef STARTUP_DATAGEN_HPP_
#define STARTUP_DATAGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "startup/diffcore.hpp"
#include "startup/random.hpp"

namespace startup {

struct Dataset {
  Matrix features;                        // N x input_dim
  std::optional<std::vector<int>> labels;  // visible labels
  // Ground truth kept for analysis when labels are hidden (unlabeled splits,
  // unlabeled files that still carry a label column). Empty when unknown.
  std::vector<int> reference_labels;
  int class_count = 0;
  std::string domain_tag;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  Index dim() const { return features.cols(); }
  bool labeled() const { return labels.has_value(); }
  // Visible labels if present, otherwise reference labels (possibly empty).
  const std::vector<int>& truth() const { return labels ? *labels : reference_labels; }
  void validate() const;
};

Dataset subset(const Dataset& data, std::span<const std::size_t> rows);

// Class c has mean  s * (alpha * b[alignment[c]] + (1 - alpha) * f_c)  where b
// are orthonormal base directions shared through basis_seed and f_c are fresh
// unit directions orthogonal to every base direction. Samples are the mean
// plus sigma * N(0, I).
struct DomainSpec {
  int class_count = 10;
  int per_class_count = 100;
  Index input_dim = 64;
  double mean_scale = 4.0;   // s
  double noise_sigma = 1.0;  // sigma
  double alpha = 1.0;
  std::vector<int> alignment;  // class -> base direction; empty means identity
  int basis_count = 20;
  std::uint64_t basis_seed = 1;
  std::string tag = "domain";

  void validate() const;
  int aligned_direction(int cls) const;
};

// basis_count x dim, orthonormal rows; a pure function of its arguments.
Matrix base_directions(std::uint64_t basis_seed, int basis_count, Index dim);

// class_count x dim class means (fresh directions drawn from `seed`).
Matrix class_means(const DomainSpec& spec, std::uint64_t seed);

Dataset generate_domain(const DomainSpec& spec, std::uint64_t seed);

struct UnlabeledSplit {
  Dataset unlabeled;  // labels hidden, reference_labels kept
  Dataset eval_pool;
  std::vector<std::size_t> unlabeled_rows;
  std::vector<std::size_t> eval_rows;
};

// Stratified per class: round(fraction * class size) rows of each class go to
// the unlabeled side.
UnlabeledSplit split_unlabeled(const Dataset& data, double fraction, std::uint64_t seed);

struct AugmentPolicy {
  double noise_sigma = 0.0;
  double dropout_prob = 0.0;
  double jitter_lo = 1.0;
  double jitter_hi = 1.0;

  void validate() const;
};

// x' = jitter * (x .* mask) + noise
RowVector augment(const RowVector& x, const AugmentPolicy& policy, Rng& rng);
Matrix augment_rows(const Matrix& x, const AugmentPolicy& policy, Rng& rng);

// Comma-separated text, header `label,f0,...,f{D-1}`, blank label for
// unlabeled rows. Labels found in an unlabeled load are kept as reference
// labels. `class_count` bounds labels when given; otherwise max label + 1.
Dataset load_dataset(const std::filesystem::path& path, bool has_labels,
                     std::optional<int> class_count = std::nullopt);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

}  // namespace startup

#endif  // STARTUP_DATAGEN_HPP_
