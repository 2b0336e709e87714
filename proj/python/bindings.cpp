#include "loop/harness.hpp"
#include "loop/mle_loop.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace loop;

namespace {

// Results cross the boundary as JSON text; the Python package decodes them.
std::string dump(const nlohmann::json& j) { return j.dump(); }

EvaluatedClass table_class(const Matrix& table) {
    EvaluatedClass cls;
    cls.table = table;
    cls.validate();
    return cls;
}

std::vector<Vector> rows_of(const Matrix& m) {
    std::vector<Vector> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).transpose());
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "LOOP / MLE-LOOP core";

    // translators run newest first, so the more specific one is registered last
    py::register_exception<Error>(m, "RuntimeFailure", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::class_<TabularAMDP>(m, "TabularAMDP")
        .def(py::init<std::size_t, std::size_t, Matrix, Matrix, double>(), py::arg("n_states"), py::arg("n_actions"),
             py::arg("transition"), py::arg("reward"), py::arg("span_bound"))
        .def_property_readonly("n_states", &TabularAMDP::n_states)
        .def_property_readonly("n_actions", &TabularAMDP::n_actions)
        .def_property_readonly("span_bound", &TabularAMDP::span_bound)
        .def_property_readonly("transition", &TabularAMDP::transition)
        .def_property_readonly("reward", py::overload_cast<>(&TabularAMDP::reward, py::const_))
        .def("to_json", [](const TabularAMDP& t) { return dump(to_json(t)); })
        .def_static("from_json", [](const std::string& s) { return amdp_from_json(nlohmann::json::parse(s)); });

    py::class_<SolveResult>(m, "SolveResult")
        .def_readonly("j_star", &SolveResult::j_star)
        .def_readonly("v_star", &SolveResult::v_star)
        .def_readonly("q_star", &SolveResult::q_star)
        .def_readonly("span", &SolveResult::span)
        .def_readonly("iterations", &SolveResult::iterations)
        .def_readonly("residual", &SolveResult::residual);

    m.def("evi_solve", py::overload_cast<const TabularAMDP&, double, long>(&evi_solve), py::arg("model"),
          py::arg("eps") = 1e-8, py::arg("max_iters") = 1'000'000);
    m.def("bellman_error_table", &bellman_error_table, py::arg("model"), py::arg("q"), py::arg("j"));
    m.def("greedy_policy", &greedy_policy, py::arg("q"));
    m.def(
        "stationary_average_reward",
        [](const TabularAMDP& model, const Policy& pi) { return stationary_average_reward(model, pi).value; },
        py::arg("model"), py::arg("policy"));

    m.def(
        "generate_instance",
        [](const std::string& kind, std::size_t states, std::size_t actions, std::size_t dim, std::uint64_t seed,
           double mixing_floor) {
            InstanceSpec spec;
            spec.kind = parse_instance_kind(kind);
            spec.n_states = states;
            spec.n_actions = actions;
            spec.feature_dim = dim;
            spec.seed = seed;
            spec.mixing_floor = mixing_floor;
            return generate_instance(spec);
        },
        py::arg("kind") = "tabular-random", py::arg("states") = 5, py::arg("actions") = 3, py::arg("dim") = 2,
        py::arg("seed") = 1, py::arg("mixing_floor") = 0.0);

    m.def(
        "_run_experiment",
        [](const std::string& config_text, const std::string& base_dir, const std::string& output_dir) {
            auto cfg = parse_config(config_text, base_dir);
            if (!output_dir.empty()) cfg.output_dir = output_dir;
            py::gil_scoped_release release;
            return dump(to_json(run_experiment(cfg)));
        },
        py::arg("config_text"), py::arg("base_dir") = ".", py::arg("output_dir") = "");
    m.def("report", &report, py::arg("dir"));
    m.def(
        "_fit_slope",
        [](const std::vector<double>& cum, std::size_t t_lo, std::size_t t_hi) {
            const auto f = fit_slope(cum, t_lo, t_hi);
            return dump({{"slope", f.slope}, {"intercept", f.intercept}, {"points", f.points},
                         {"excluded", f.excluded}, {"t_lo", f.t_lo}, {"t_hi", f.t_hi}});
        },
        py::arg("cum"), py::arg("t_lo"), py::arg("t_hi"));

    m.def(
        "_eluder_dim",
        [](const Matrix& table, double eps, std::size_t max_nodes) {
            return dump(to_json(eluder_dim(table_class(table), eps, {max_nodes, false})));
        },
        py::arg("table"), py::arg("eps"), py::arg("max_nodes") = 5'000'000);
    m.def(
        "_de_dim",
        [](const Matrix& table, const Matrix& measures, double eps, std::size_t max_nodes) {
            return dump(to_json(de_dim(table_class(table), rows_of(measures), eps, {max_nodes, false})));
        },
        py::arg("table"), py::arg("measures"), py::arg("eps"), py::arg("max_nodes") = 5'000'000);
    m.def(
        "_effective_dim",
        [](const Matrix& vectors, double eps) { return dump(to_json(effective_dim(rows_of(vectors), eps))); },
        py::arg("vectors"), py::arg("eps"));
    m.def("tv_distance", [](const std::vector<double>& p, const std::vector<double>& q) { return tv_distance(p, q); });
}
