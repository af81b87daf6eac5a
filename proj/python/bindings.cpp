#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "plfgp/acpf.hpp"
#include "plfgp/active_learn.hpp"
#include "plfgp/case_model.hpp"
#include "plfgp/errors.hpp"
#include "plfgp/gp.hpp"
#include "plfgp/plf_testing.hpp"
#include "plfgp/study.hpp"

namespace py = pybind11;
using namespace plfgp;

namespace {

Quantity to_quantity(const std::string& s) {
    if (s == "P") return Quantity::P;
    if (s == "Q") return Quantity::Q;
    throw SemanticError("quantity must be 'P' or 'Q', got '" + s + "'");
}

Source to_source(const std::string& s) {
    if (s == "generation") return Source::Generation;
    if (s == "demand") return Source::Demand;
    throw SemanticError("source must be 'generation' or 'demand', got '" + s + "'");
}

UncertainBox make_box(const DimensionMap& dims, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    UncertainBox b;
    b.dims = dims;
    b.lower = lower;
    b.upper = upper;
    return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core: power flow, GP surrogates, GP-UCB learning and probabilistic testing";

    // Exception hierarchy mirrors the C++ one. Translators run newest first,
    // so the base class is registered before its subclasses.
    const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<SyntaxError>(m, "SyntaxError", base);
    py::register_exception<SemanticError>(m, "SemanticError", base);
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base);
    py::register_exception<UnknownBus>(m, "UnknownBus", base);
    py::register_exception<NonConvergence>(m, "NonConvergence", base);
    py::register_exception<SingularJacobian>(m, "SingularJacobian", base);
    py::register_exception<FactorizationFailure>(m, "FactorizationFailure", base);
    py::register_exception<RejectionStall>(m, "RejectionStall", base);
    py::register_exception<ExcessiveFailures>(m, "ExcessiveFailures", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);

    py::class_<NetworkCase>(m, "NetworkCase")
        .def_property_readonly("base_mva", &NetworkCase::base_mva)
        .def_property_readonly("bus_count", &NetworkCase::bus_count)
        .def("has_bus", &NetworkCase::has_bus)
        .def("bus_ids",
             [](const NetworkCase& n) {
                 std::vector<int> ids;
                 for (const Bus& b : n.buses()) ids.push_back(b.id);
                 return ids;
             })
        .def("base_kv", [](const NetworkCase& n, int bus) { return n.bus(bus).baseKV; })
        .def("to_json", [](const NetworkCase& n) { return case_to_json(n).dump(); });
    m.def("load_case", &load_case, py::arg("path"));
    m.def("parse_case", [](const std::string& text) { return parse_case(text); }, py::arg("text"));
    m.def("case_from_json", [](const std::string& s) { return case_from_json(nlohmann::json::parse(s)); });

    py::class_<InjectionDim>(m, "InjectionDim")
        .def(py::init([](int bus, const std::string& quantity, const std::string& source) {
                 return InjectionDim{bus, to_quantity(quantity), to_source(source)};
             }),
             py::arg("bus"), py::arg("quantity") = "P", py::arg("source") = "generation")
        .def_readonly("bus", &InjectionDim::bus)
        .def_property_readonly("label", [](const InjectionDim& d) { return label(d); })
        .def("__repr__", [](const InjectionDim& d) { return "InjectionDim(" + label(d) + ")"; });

    py::class_<PowerFlowSolution>(m, "PowerFlowSolution")
        .def_readonly("bus_ids", &PowerFlowSolution::bus_ids)
        .def_readonly("vm", &PowerFlowSolution::Vm)
        .def_readonly("va", &PowerFlowSolution::Va)
        .def_readonly("iterations", &PowerFlowSolution::iterations)
        .def_readonly("max_mismatch", &PowerFlowSolution::max_mismatch)
        .def("voltage", &read_voltage, py::arg("bus"));
    m.def(
        "solve_power_flow",
        [](const NetworkCase& net, const DimensionMap& dims, const Eigen::VectorXd& x, double tolerance,
           int max_iterations, bool flat_start) {
            PowerFlowOptions o;
            o.tolerance = tolerance;
            o.max_iterations = max_iterations;
            o.flat_start = flat_start;
            return solve_nrlf(net, dims, x, o);
        },
        py::arg("net"), py::arg("dims") = DimensionMap{}, py::arg("x") = Eigen::VectorXd(0),
        py::arg("tolerance") = 1e-8, py::arg("max_iterations") = 30, py::arg("flat_start") = false);

    py::class_<GPModel>(m, "GPModel")
        .def_property_readonly("size", &GPModel::size)
        .def_property_readonly("noise_variance", &GPModel::noise_variance)
        .def("predict",
             [](const GPModel& g, const Eigen::MatrixXd& X, int jobs) {
                 const BatchPrediction p = g.posterior_batch(X, jobs);
                 return py::make_tuple(p.mean, p.std);
             },
             py::arg("X"), py::arg("jobs") = 1)
        .def("to_json", [](const GPModel& g) { return model_to_json(g).dump(); });
    m.def("fit", [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double noise) { return fit(X, y, noise); },
          py::arg("X"), py::arg("y"), py::arg("noise_variance") = kDefaultNoiseVariance);

    py::class_<LearnResult>(m, "LearnResult")
        .def_readonly("model", &LearnResult::model)
        .def_readonly("target_bus", &LearnResult::target_bus)
        .def_readonly("base_kv", &LearnResult::base_kv)
        .def_readonly("xi_max", &LearnResult::xi_max)
        .def_readonly("xi_tol", &LearnResult::xi_tol)
        .def_readonly("beta_final", &LearnResult::beta_final)
        .def_readonly("n_train", &LearnResult::n_train)
        .def_readonly("failures", &LearnResult::failures)
        .def_readonly("converged", &LearnResult::converged)
        .def_readonly("elapsed", &LearnResult::elapsed)
        .def("predict",
             [](const LearnResult& r, const Eigen::MatrixXd& X) {
                 const BatchPrediction p = r.model.posterior_batch(X);
                 return py::make_tuple(p.mean, p.std);
             },
             py::arg("X"))
        .def("trace_csv", &trace_csv)
        .def("to_json", [](const LearnResult& r) { return result_to_json(r).dump(); });
    m.def("result_from_json", [](const std::string& s) { return result_from_json(nlohmann::json::parse(s)); });
    m.def(
        "learn",
        [](const NetworkCase& net, int target, const DimensionMap& dims, const Eigen::VectorXd& lower,
           const Eigen::VectorXd& upper, double xi_tol, double delta, int budget, std::uint64_t seed) {
            LearnOptions o;
            o.xi_tol = xi_tol;
            o.schedule.delta = delta;
            o.budget = budget;
            o.seed = seed;
            py::gil_scoped_release release;
            return learn(net, target, make_box(dims, lower, upper), o);
        },
        py::arg("net"), py::arg("target"), py::arg("dims"), py::arg("lower"), py::arg("upper"),
        py::arg("xi_tol") = 0.01, py::arg("delta") = 0.01, py::arg("budget") = 50, py::arg("seed") = 0);

    py::class_<InputDistribution>(m, "InputDistribution")
        .def_static("uniform", &InputDistribution::uniform, py::arg("lower"), py::arg("upper"))
        .def_static("normal", &InputDistribution::normal, py::arg("mean"), py::arg("std"))
        .def_static("gamma", &InputDistribution::gamma, py::arg("shape"), py::arg("scale"), py::arg("offset"))
        .def_static("empirical", &InputDistribution::empirical, py::arg("rows"))
        .def(
            "truncated",
            [](InputDistribution d, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
                d.clip_to(make_box(DimensionMap(static_cast<std::size_t>(lower.size())), lower, upper));
                return d;
            },
            py::arg("lower"), py::arg("upper"))
        .def_property_readonly("dim", &InputDistribution::dim)
        .def("to_json", [](const InputDistribution& d) { return distribution_to_json(d).dump(); });
    m.def("sample", &sample, py::arg("dist"), py::arg("n"), py::arg("seed"), py::arg("jobs") = 1);

    m.def(
        "test",
        [](const LearnResult& r, const InputDistribution& d, std::size_t n, std::uint64_t seed, int jobs) {
            TestOptions o;
            o.jobs = jobs;
            return report_to_json(test(r, d, n, seed, o)).dump();
        },
        py::arg("result"), py::arg("dist"), py::arg("n"), py::arg("seed"), py::arg("jobs") = 1);
    m.def(
        "mcs",
        [](const NetworkCase& net, int target, const DimensionMap& dims, const InputDistribution& d, std::size_t n,
           std::uint64_t seed, int jobs) {
            TestOptions o;
            o.jobs = jobs;
            py::gil_scoped_release release;
            return report_to_json(mcs(net, target, dims, d, n, seed, o)).dump();
        },
        py::arg("net"), py::arg("target"), py::arg("dims"), py::arg("dist"), py::arg("n"), py::arg("seed"),
        py::arg("jobs") = 1);
    m.def(
        "oracle_values",
        [](const NetworkCase& net, int target, const DimensionMap& dims, const Eigen::MatrixXd& X, int jobs) {
            py::gil_scoped_release release;
            return oracle_values(net, target, dims, X, jobs).values;
        },
        py::arg("net"), py::arg("target"), py::arg("dims"), py::arg("X"), py::arg("jobs") = 1);
    m.def(
        "eps_v",
        [](const Eigen::VectorXd& v_true, const Eigen::VectorXd& v_model) {
            return eps_v(v_true, v_model).eps_v_percent;
        },
        py::arg("v_true"), py::arg("v_model"));

    m.def(
        "run_study",
        [](const std::filesystem::path& config, const std::string& command, const std::filesystem::path& out,
           int jobs, const std::string& format) {
            const Study s = load_study(config);
            RunOptions run;
            run.out = out.empty() ? s.config.output_dir : out;
            run.jobs = jobs;
            run.format = format == "json" ? TableFormat::Json : TableFormat::Csv;
            std::ostringstream log;
            int code = 0;
            {
                py::gil_scoped_release release;
                if (command == "parse-check") {
                    code = cmd_parse_check(s, log);
                } else if (command == "learn") {
                    code = cmd_learn(s, run, log);
                } else if (command == "test") {
                    code = cmd_test(s, run, log);
                } else if (command == "mcs") {
                    code = cmd_mcs(s, run, log);
                } else if (command == "compare") {
                    code = cmd_compare(s, run, log);
                } else {
                    throw SemanticError("unknown command '" + command + "'");
                }
            }
            return py::make_tuple(code, log.str());
        },
        py::arg("config"), py::arg("command"), py::arg("out") = std::filesystem::path(), py::arg("jobs") = 1,
        py::arg("format") = "csv");
}
