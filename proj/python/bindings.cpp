// Thin python layer over the C++ core. Structured results cross as JSON text
// and are decoded on the python side.

#include "droopcert/certify.hpp"
#include "droopcert/disturbance.hpp"
#include "droopcert/harness.hpp"
#include "droopcert/scenario.hpp"
#include "droopcert/simulate.hpp"
#include "droopcert/tubes.hpp"
#include "droopcert/variational.hpp"
#include "droopcert/pipelines.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace droopcert;

namespace {

SystemState state_of(const Scenario& sc, const Vec& theta, const Vec& v) {
    if (static_cast<std::size_t>(theta.size()) != sc.net.size() || theta.size() != v.size())
        throw ModelError("state dimension does not match the network");
    return {theta, v};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.attr("__version__") = kVersion;

    py::register_exception<ModelError>(m, "ModelError", PyExc_ValueError);
    py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);

    py::class_<Scenario>(m, "Scenario")
        .def_readonly("name", &Scenario::name)
        .def_property_readonly("n_buses", [](const Scenario& s) { return s.net.size(); })
        .def_property_readonly("conductance", [](const Scenario& s) { return s.net.conductance(); })
        .def_property_readonly("susceptance", [](const Scenario& s) { return s.net.susceptance(); })
        .def_property_readonly("reference", [](const Scenario& s) -> py::object {
            if (!s.reference) return py::none();
            return py::make_tuple(s.reference->theta, s.reference->v);
        });

    m.def("load_scenario", &load_scenario, py::arg("path"));
    m.def("parse_scenario", [](const std::string& text) { return parse_scenario(text); }, py::arg("text"));

    m.def("_certify_json",
          [](const Scenario& sc, std::size_t jobs) {
              py::gil_scoped_release release;
              return to_json(certify_scenario(sc, jobs)).dump();
          },
          py::arg("scenario"), py::arg("jobs") = 1);

    m.def("power_injections",
          [](const Scenario& sc, const Vec& theta, const Vec& v) {
              const auto inj = power_injections(sc.net, state_of(sc, theta, v));
              return py::make_tuple(inj.p, inj.q);
          },
          py::arg("scenario"), py::arg("theta"), py::arg("v"));

    m.def("jacobian",
          [](const Scenario& sc, const Vec& theta, const Vec& v) {
              const auto j = jacobian(sc.net, sc.params, state_of(sc, theta, v));
              py::dict out;
              out["tt"] = j.j_tt;
              out["tv"] = j.j_tv;
              out["vt"] = j.j_vt;
              out["vv"] = j.j_vv;
              return out;
          },
          py::arg("scenario"), py::arg("theta"), py::arg("v"));

    m.def("measure",
          [](const Scenario& sc, const Vec& theta, const Vec& v) {
              return measure(sc.net, sc.params, state_of(sc, theta, v));
          },
          py::arg("scenario"), py::arg("theta"), py::arg("v"));

    m.def("simulate",
          [](const Scenario& sc, const Vec& theta, const Vec& v, double t_end, double output_dt, bool with_input) {
              DisturbanceSpec quiet;
              quiet.n_buses = sc.net.size();
              const Disturbance u = with_input ? make_disturbance(sc.disturbance) : Disturbance(quiet);
              IntegrateOptions io;
              io.output_dt = output_dt;
              io.rel_tol = sc.solver.rel_tol;
              io.abs_tol = sc.solver.abs_tol;
              Trajectory tr;
              {
                  py::gil_scoped_release release;
                  tr = integrate(sc.net, sc.params, state_of(sc, theta, v), u, 0.0, t_end, io);
              }
              const auto n = static_cast<Eigen::Index>(sc.net.size());
              const auto k = static_cast<Eigen::Index>(tr.size());
              Mat th(k, n), vv(k, n);
              for (Eigen::Index i = 0; i < k; ++i) {
                  th.row(i) = tr.states[static_cast<std::size_t>(i)].theta.transpose();
                  vv.row(i) = tr.states[static_cast<std::size_t>(i)].v.transpose();
              }
              return py::make_tuple(tr.times, th, vv);
          },
          py::arg("scenario"), py::arg("theta"), py::arg("v"), py::arg("t_end"), py::arg("output_dt") = 0.01,
          py::arg("with_input") = true);

    m.def("comparison_radius",
          [](double c, double rho0, const std::vector<double>& knots, const std::vector<double>& values,
             const std::vector<double>& times) {
              return ComparisonRadius::piecewise(c, rho0, knots, values)(times);
          },
          py::arg("c"), py::arg("rho0"), py::arg("knots"), py::arg("values"), py::arg("times"));

    m.def("_oracles_json",
          [](const Scenario& sc, std::size_t n_states, std::uint64_t seed, std::size_t jobs) {
              OracleOptions o;
              o.n_states = n_states;
              o.seed = seed;
              o.jobs = jobs;
              py::gil_scoped_release release;
              return run_oracles(sc, o).to_json().dump();
          },
          py::arg("scenario"), py::arg("n_states") = 1000, py::arg("seed") = 42, py::arg("jobs") = 1);
}
