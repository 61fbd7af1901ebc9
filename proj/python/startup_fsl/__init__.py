# Copyright 2026 The startup-fsl Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Few-shot transfer with self-training on unlabeled target data."""

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    DomainSpec,
    Error,
    ProtocolError,
    adjusted_mutual_information,
    class_means,
    cluster_agreement,
    cross_entropy,
    generate_domain,
    kl_soft,
    load_bundle_embed,
    nt_xent,
    paired_t_test,
    report,
    run_experiment,
    student_t_two_sided_p,
    summarize,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "DomainSpec",
    "Error",
    "ProtocolError",
    "adjusted_mutual_information",
    "class_means",
    "cluster_agreement",
    "cross_entropy",
    "generate_domain",
    "kl_soft",
    "load_bundle_embed",
    "nt_xent",
    "paired_t_test",
    "report",
    "run_experiment",
    "student_t_two_sided_p",
    "summarize",
]
