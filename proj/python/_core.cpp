#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nullext/catalog.hpp"
#include "nullext/cli.hpp"
#include "nullext/geometry.hpp"
#include "nullext/jet.hpp"
#include "nullext/tensor.hpp"

namespace py = pybind11;

namespace {

std::vector<std::vector<double>> as_matrix(const nullext::Tensor& t) {
  const int n = t.dim();
  std::vector<std::vector<double>> out(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[i][j] = t(i, j);
  return out;
}

// (report json, csv, passed) for a config document with the command set inside it
py::tuple run_text(const std::string& text) {
  const auto cfg = nullext::parse_config_text(text);
  const auto r = nullext::run_command(cfg);
  return py::make_tuple(r.dump(), r.csv, r.passed);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "compiled core of nullext";
  m.attr("schema_version") = nullext::kSchemaVersion;

  py::register_exception<nullext::UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<nullext::GeometryError>(m, "GeometryError", PyExc_ArithmeticError);
  py::register_exception<nullext::SingularChartPoint>(m, "SingularChartPoint", PyExc_ArithmeticError);
  py::register_exception<nullext::ParameterError>(m, "ParameterError", PyExc_ValueError);

  m.def("run_text", &run_text, py::arg("config_text"));
  m.def("metric_hash", [](const std::string& name, double mass, double a) {
    return nullext::metric_by_name(name, mass, a).hash();
  }, py::arg("name"), py::arg("m") = 1.0, py::arg("a") = 0.5);
  m.def("coords", [](const std::string& name, double mass, double a) {
    return nullext::metric_by_name(name, mass, a).coords();
  }, py::arg("name"), py::arg("m") = 1.0, py::arg("a") = 0.5);
  m.def("metric_at", [](const std::string& name, double mass, double a, std::vector<double> x) {
    const auto md = nullext::metric_by_name(name, mass, a);
    const auto flat = md.metric_at(x);
    const std::size_t n = x.size();
    std::vector<std::vector<double>> g(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i][j] = flat[i * n + j];
    return g;
  }, py::arg("name"), py::arg("m"), py::arg("a"), py::arg("x"));
  m.def("ricci_at", [](const std::string& name, double mass, double a, std::vector<double> x) {
    const auto md = nullext::metric_by_name(name, mass, a);
    return as_matrix(nullext::curvature_at(md, x, 2).ricci_val());
  }, py::arg("name"), py::arg("m"), py::arg("a"), py::arg("x"));
  m.def("riemann_scale", [](const std::string& name, double mass, double a, std::vector<double> x) {
    const auto md = nullext::metric_by_name(name, mass, a);
    return nullext::max_abs(nullext::curvature_at(md, x, 2).riemann_val());
  }, py::arg("name"), py::arg("m"), py::arg("a"), py::arg("x"));
  m.def("interior_grid", &nullext::interior_grid, py::arg("name"), py::arg("m"), py::arg("a"), py::arg("n"));
}
