// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "nsnet/cli.hpp"
#include "nsnet/data_store.hpp"
#include "nsnet/error.hpp"
#include "nsnet/evaluation.hpp"
#include "nsnet/fusion.hpp"
#include "nsnet/numerics.hpp"
#include "nsnet/supervision.hpp"

namespace py = pybind11;
using namespace nsnet;

namespace {

Array to_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array, got " + std::to_string(a.ndim()) + " dims");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Array::matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

py::array_t<double> to_numpy(const Array& a) {
  py::array_t<double> out({a.rows(), a.cols()});
  std::copy(a.data().begin(), a.data().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_nsnet, m) {
  m.doc() = "Core operations of the nsnet frame sampler";

  m.def("softmax", [](const std::vector<double>& x) { return softmax(x); }, py::arg("logits"));
  m.def("rank_order", [](const std::vector<double>& s) { return rank_order(s); }, py::arg("scores"));
  m.def("select_topk", [](const std::vector<double>& s, std::size_t k) { return select_topk(s, k); },
        py::arg("scores"), py::arg("k"));
  m.def(
      "fuse_scores",
      [](const std::vector<double>& sf, const std::vector<double>& sv, const std::string& mode, double ratio) {
        return fuse_scores(sf, sv, parse_fusion_mode(mode), ratio);
      },
      py::arg("s_f"), py::arg("s_v"), py::arg("mode"), py::arg("ratio") = 0.6);
  m.def(
      "select_frames",
      [](const std::vector<double>& sf, const std::vector<double>& sv, const std::string& mode, std::size_t k,
         double ratio) { return select_frames(sf, sv, FusionConfig{parse_fusion_mode(mode), ratio, k}).selected; },
      py::arg("s_f"), py::arg("s_v"), py::arg("mode") = "index_union", py::arg("k") = 4, py::arg("ratio") = 0.6);

  m.def(
      "ns_pseudo_labels",
      [](const std::vector<double>& g, std::size_t label, std::size_t num_classes) {
        std::vector<std::vector<double>> out;
        for (auto& p : ns_pseudo_labels(g, label, num_classes)) out.push_back(std::move(p.target));
        return out;
      },
      py::arg("guiding_scores"), py::arg("label"), py::arg("num_classes"));
  m.def(
      "presample_indices",
      [](std::size_t n, std::size_t t) { return presample_indices(n, PresampleConfig{t, false}); },
      py::arg("num_frames"), py::arg("t"));

  m.def(
      "mean_average_precision",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores,
         const std::vector<std::size_t>& labels) {
        const ApResult r = mean_average_precision(to_array(scores), labels);
        return py::make_tuple(r.map, r.per_class, r.excluded_classes);
      },
      py::arg("scores"), py::arg("labels"), "Returns (mAP, per-class AP, excluded classes).");
  m.def(
      "flops_total",
      [](double recognizer, std::size_t k, double embedding, double vgm, double fsm) {
        return flops_total(FlopsBudget{recognizer, k, embedding, vgm, fsm});
      },
      py::arg("recognizer_per_frame"), py::arg("k"), py::arg("embedding"), py::arg("vgm"), py::arg("fsm"));

  m.def("read_feature_file", [](const fs::path& p) { return to_numpy(read_feature_file(p)); }, py::arg("path"));
  m.def(
      "write_feature_file",
      [](const fs::path& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
        write_feature_file(p, to_array(a));
      },
      py::arg("path"), py::arg("matrix"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"nsnet"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one nsnet subcommand; returns (exit code, stdout, stderr).");
}
