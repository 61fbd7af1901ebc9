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

#ifndef STARTUP_ANALYSIS_HPP_
#define STARTUP_ANALYSIS_HPP_

#include <filesystem>
#include <span>
#include <vector>

#include "startup/datagen.hpp"
#include "startup/models.hpp"

namespace startup {

struct Partition {
  std::vector<int> assignments;
  int cluster_count = 0;

  std::size_t size() const { return assignments.size(); }
  void validate() const;
};

// cluster_count = max label + 1.
Partition make_partition(std::span<const int> labels);

// Each example goes to the teacher's most probable base class (lowest index
// on ties). Argmax is taken on logits, so it does not depend on temperature.
Partition induced_grouping(const ModelBundle& teacher, const Dataset& data);

struct ClusterAgreement {
  double mutual_information = 0.0;
  double expected_mutual_information = 0.0;
  double entropy_u = 0.0;
  double entropy_v = 0.0;
  double ami = 0.0;
};

// Adjusted mutual information, arithmetic-mean normalizer, exact
// hypergeometric expected MI, natural logs. 0 when the denominator vanishes.
ClusterAgreement cluster_agreement(const Partition& u, const Partition& v);
double adjusted_mutual_information(const Partition& u, const Partition& v);

// Header `id,label,e0,...,e{d-1}`; label blank when the data is unlabeled.
void export_embeddings(const ModelBundle& bundle, const Dataset& data,
                       const std::filesystem::path& path);

}  // namespace startup

#endif  // STARTUP_ANALYSIS_HPP_
