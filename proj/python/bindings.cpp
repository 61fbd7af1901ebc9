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

// Python bindings: data generation, losses, agreement metrics, protocol
// statistics and the experiment runner.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "startup/analysis.hpp"
#include "startup/error.hpp"
#include "startup/experiment.hpp"
#include "startup/fewshot_eval.hpp"
#include "startup/losses.hpp"
#include "startup/models.hpp"

namespace py = pybind11;
using namespace startup;

namespace {

py::dict agreement_dict(const ClusterAgreement& a) {
  py::dict d;
  d["ami"] = a.ami;
  d["mutual_information"] = a.mutual_information;
  d["expected_mutual_information"] = a.expected_mutual_information;
  d["entropy_u"] = a.entropy_u;
  d["entropy_v"] = a.entropy_v;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "STARTUP few-shot transfer: C++ core bindings";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  py::class_<DomainSpec>(m, "DomainSpec")
      .def(py::init<>())
      .def_readwrite("class_count", &DomainSpec::class_count)
      .def_readwrite("per_class_count", &DomainSpec::per_class_count)
      .def_readwrite("input_dim", &DomainSpec::input_dim)
      .def_readwrite("mean_scale", &DomainSpec::mean_scale)
      .def_readwrite("noise_sigma", &DomainSpec::noise_sigma)
      .def_readwrite("alpha", &DomainSpec::alpha)
      .def_readwrite("alignment", &DomainSpec::alignment)
      .def_readwrite("basis_count", &DomainSpec::basis_count)
      .def_readwrite("basis_seed", &DomainSpec::basis_seed)
      .def_readwrite("tag", &DomainSpec::tag);

  m.def(
      "generate_domain",
      [](const DomainSpec& spec, std::uint64_t seed) {
        Dataset d = generate_domain(spec, seed);
        return py::make_tuple(d.features, *d.labels);
      },
      py::arg("spec"), py::arg("seed"), "Synthetic domain as (features, labels).");
  m.def("class_means", &class_means, py::arg("spec"), py::arg("seed"));

  m.def(
      "cross_entropy",
      [](const Matrix& probs, std::vector<int> labels) { return cross_entropy(probs, labels); },
      py::arg("probs"), py::arg("labels"));
  m.def("kl_soft", &kl_soft, py::arg("student_probs"), py::arg("targets"));
  m.def(
      "nt_xent",
      [](const Matrix& view_a, const Matrix& view_b, double temperature) {
        return nt_xent(make_paired_batch(view_a, view_b), temperature);
      },
      py::arg("view_a"), py::arg("view_b"), py::arg("temperature") = 1.0,
      "NT-Xent over unit-norm rows; row i of view_a pairs with row i of view_b.");

  m.def(
      "adjusted_mutual_information",
      [](std::vector<int> u, std::vector<int> v) {
        return adjusted_mutual_information(make_partition(u), make_partition(v));
      },
      py::arg("u"), py::arg("v"));
  m.def(
      "cluster_agreement",
      [](std::vector<int> u, std::vector<int> v) {
        return agreement_dict(cluster_agreement(make_partition(u), make_partition(v)));
      },
      py::arg("u"), py::arg("v"));

  m.def(
      "summarize",
      [](std::vector<double> acc) {
        double mean, ci;
        summarize(acc, mean, ci);
        return py::make_tuple(mean, ci);
      },
      py::arg("accuracies"), "(mean, 95% CI half-width)");
  m.def(
      "paired_t_test",
      [](std::vector<double> a, std::vector<double> b) {
        Comparison c = paired_t_test(a, b);
        py::dict d;
        d["t_statistic"] = c.t_statistic;
        d["p_value"] = c.p_value;
        d["significant"] = c.significant;
        d["mean_difference"] = c.mean_difference;
        return d;
      },
      py::arg("a"), py::arg("b"));
  m.def("student_t_two_sided_p", &student_t_two_sided_p, py::arg("t"), py::arg("df"));

  m.def(
      "load_bundle_embed",
      [](const std::filesystem::path& bundle, const Matrix& x) { return embed(load_bundle(bundle), x); },
      py::arg("bundle_path"), py::arg("features"), "Embeddings of features under a saved bundle.");

  m.def(
      "run_experiment",
      [](const std::filesystem::path& config, const std::filesystem::path& out,
         std::optional<std::uint64_t> seed, std::optional<std::string> profile) {
        ExperimentConfig c = load_config(config, profile);
        if (seed) c.seed = *seed;
        if (!out.empty()) c.output_dir = out;
        c.validate();
        RunOutcome r;
        {
          py::gil_scoped_release release;
          r = run_experiment(c);
        }
        py::dict d;
        d["output_dir"] = r.output_dir;
        d["cells_completed"] = r.cells_completed;
        d["failures"] = r.failures;
        return d;
      },
      py::arg("config"), py::arg("out") = std::filesystem::path(), py::arg("seed") = py::none(),
      py::arg("profile") = py::none());
  m.def(
      "report",
      [](const std::filesystem::path& dir) { return format_report(emit_report(dir)); },
      py::arg("results_dir"), "Rebuild report.txt and summary.json; returns the report text.");
}
