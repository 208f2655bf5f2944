#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mock_llm.hpp"
#include "smcprog/app.hpp"
#include "smcprog/error.hpp"
#include "smcprog/finite.hpp"
#include "smcprog/oracle.hpp"
#include "smcprog/resample.hpp"
#include "smcprog/runlog.hpp"
#include "smcprog/schedule.hpp"

namespace py = pybind11;
using namespace smcprog;

namespace {

using CommandResult = std::tuple<int, std::string, std::string>;

template <typename F>
CommandResult capture(F&& f) {
    std::ostringstream out, err;
    int code;
    {
        py::gil_scoped_release release;
        code = f(out, err);
    }
    return {code, out.str(), err.str()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "SMC program search engine: commands, log projections and exact oracles";

    py::register_exception<Error>(m, "SmcError");

    // Commands return (exit_code, stdout, stderr).
    m.def(
        "run",
        [](const std::filesystem::path& config, std::optional<std::filesystem::path> run_dir,
           std::optional<std::uint64_t> seed, bool dry_run, std::optional<int> stop_after_epoch) {
            RunOptions o;
            o.run_dir = std::move(run_dir);
            o.seed = seed;
            o.dry_run = dry_run;
            o.stop_after_epoch = stop_after_epoch;
            return capture([&](std::ostream& out, std::ostream& err) { return cmd_run(config, o, out, err); });
        },
        py::arg("config"), py::arg("run_dir") = py::none(), py::arg("seed") = py::none(),
        py::arg("dry_run") = false, py::arg("stop_after_epoch") = py::none());
    m.def(
        "resume",
        [](const std::filesystem::path& run_dir, std::optional<int> stop_after_epoch) {
            RunOptions o;
            o.stop_after_epoch = stop_after_epoch;
            return capture([&](std::ostream& out, std::ostream& err) { return cmd_resume(run_dir, o, out, err); });
        },
        py::arg("run_dir"), py::arg("stop_after_epoch") = py::none());
    m.def(
        "export",
        [](const std::filesystem::path& run_dir, const std::string& what) {
            return capture([&](std::ostream& out, std::ostream& err) { return cmd_export(run_dir, what, out, err); });
        },
        py::arg("run_dir"), py::arg("what") = "all");
    m.def(
        "oracle_check",
        [](const std::string& suite) {
            return capture([&](std::ostream& out, std::ostream& err) { return cmd_oracle_check(suite, out, err); });
        },
        py::arg("suite") = "all");

    // Projections, as JSON text.
    m.def(
        "summarize_json",
        [](const std::filesystem::path& run_dir, bool tolerate_torn_tail) {
            return summarize_events(read_event_log(run_dir, tolerate_torn_tail).events).dump();
        },
        py::arg("run_dir"), py::arg("tolerate_torn_tail") = true);
    m.def(
        "diagnostics_json",
        [](const std::filesystem::path& run_dir) { return diagnostics_from_events(read_event_log(run_dir, true).events).dump(); },
        py::arg("run_dir"));

    // Numerics.
    m.def("fnv1a64", [](const std::string& bytes) { return fnv1a64(bytes); });
    m.def(
        "compute_weights",
        [](const std::vector<double>& rewards, double delta_beta) {
            const auto w = compute_weights(rewards, delta_beta);
            return std::make_pair(w.log_weights, w.normalized);
        },
        py::arg("rewards"), py::arg("delta_beta"));
    m.def(
        "systematic_resample",
        [](const std::vector<double>& normalized, double offset) {
            WeightVector w;
            w.normalized = normalized;
            return systematic_resample_with_offset(w, offset);
        },
        py::arg("normalized"), py::arg("offset"));
    m.def(
        "ess",
        [](const std::vector<double>& rewards, double lambda_prev, double lambda, double beta) {
            return ess(rewards, lambda_prev, lambda, beta);
        },
        py::arg("rewards"), py::arg("lambda_prev"), py::arg("lambda_"), py::arg("beta"));
    m.def(
        "next_lambda",
        [](const std::vector<double>& rewards, double lambda_prev, double beta, double kappa, int min_iterations) {
            AnnealState s;
            s.lambda = lambda_prev;
            s.beta_target = beta;
            return next_lambda(rewards, s, {kappa, min_iterations, 1e-6, 60});
        },
        py::arg("rewards"), py::arg("lambda_prev"), py::arg("beta"), py::arg("kappa") = 0.9,
        py::arg("min_iterations") = 3);

    // Oracles on {0,1}^n with bit-flip proposals.
    m.def(
        "exact_tilted",
        [](const std::vector<double>& prior, const std::vector<double>& rewards, double beta_t) {
            return exact_tilted(prior, rewards, beta_t);
        },
        py::arg("prior"), py::arg("rewards"), py::arg("beta_t"));
    m.def(
        "path_gamma",
        [](const std::vector<double>& prior, const std::vector<double>& rewards, double beta) {
            return path_gamma(prior, rewards, beta);
        },
        py::arg("prior"), py::arg("rewards"), py::arg("beta"));
    m.def(
        "bitflip_invariance_residual",
        [](int n_bits, double beta_t, bool full_ratio) {
            return check_invariance(bitstring_space(n_bits), beta_t, BitFlipKernel(),
                                    full_ratio ? AcceptanceMode::FullRatio : AcceptanceMode::RewardOnly);
        },
        py::arg("n_bits"), py::arg("beta_t"), py::arg("full_ratio") = true);
    m.def(
        "theorem1_json",
        [](int n_runs, double epsilon, std::uint64_t seed) {
            py::gil_scoped_release release;
            RunConfig cfg = theorem1_reference_config();
            cfg.seed = seed;
            return theorem1_to_json(theorem1_experiment(bitstring_space(8), BitFlipKernel(), cfg, n_runs, epsilon))
                .dump();
        },
        py::arg("n_runs") = 25, py::arg("epsilon") = 0.05, py::arg("seed") = 1);

    py::class_<mock::MockLlmServer>(m, "MockLlmServer")
        .def(py::init([](int malformed_per_mille, int rate_limit_first, std::int64_t outage_after, std::string api_key) {
                 return std::make_unique<mock::MockLlmServer>(
                     mock::MockLlmOptions{malformed_per_mille, rate_limit_first, outage_after, std::move(api_key)});
             }),
             py::arg("malformed_per_mille") = 50, py::arg("rate_limit_first") = 0, py::arg("outage_after") = -1,
             py::arg("api_key") = "")
        .def("start", &mock::MockLlmServer::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0)
        .def("stop", &mock::MockLlmServer::stop, py::call_guard<py::gil_scoped_release>())
        .def_property_readonly("port", &mock::MockLlmServer::port)
        .def_property_readonly("base_url", &mock::MockLlmServer::base_url)
        .def_property_readonly("requests", &mock::MockLlmServer::requests);
}
