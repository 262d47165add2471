// Python front end: thin JSON-string wrappers over the experiment layer. The
// gpsim package (see gpsim/__init__.py) converts to and from dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "gpsim/experiment.hpp"

namespace py = pybind11;
using namespace gpsim;

namespace {

nlohmann::json parse_json(const std::string& text, const char* what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

ExperimentConfig config_from_string(const std::string& text) {
    return ExperimentConfig::from_json(parse_json(text, "config"));
}

std::optional<Method> method_or_none(const std::string& name) {
    if (name.empty()) return std::nullopt;
    return method_from_string(name);
}

std::string run_json(const std::string& config, const std::string& method,
                     const std::string& data_root) {
    const ExperimentConfig cfg = config_from_string(config);
    return run_experiment(cfg, data_root, method_or_none(method)).to_json().dump();
}

std::string sweep_json(const std::string& config, const std::vector<int>& tasks,
                       const std::string& data_root) {
    return sweep_experiment(config_from_string(config), data_root, tasks).dump();
}

std::string difficulty_json(const std::string& config, const std::string& data_root) {
    return diagnose_difficulty(config_from_string(config), data_root).dump();
}

std::string zeroshot_json(const std::string& config, const std::string& data_root) {
    return diagnose_zeroshot(config_from_string(config), data_root).dump();
}

std::vector<ExperimentResult> results_from_strings(const std::vector<std::string>& texts) {
    std::vector<ExperimentResult> results;
    results.reserve(texts.size());
    for (const auto& t : texts) {
        results.push_back(ExperimentResult::from_json(parse_json(t, "result")));
    }
    return results;
}

std::string report_text(const std::vector<std::string>& results) {
    return render_report(results_from_strings(results));
}

std::string curves_csv(const std::vector<std::string>& results) {
    return report_curves_csv(results_from_strings(results));
}

std::string validate_result(const std::string& result) {
    return ExperimentResult::from_json(parse_json(result, "result")).to_json().dump();
}

std::vector<std::string> method_names() {
    std::vector<std::string> names;
    for (const Method m : {Method::ErRes, Method::ErRingFull, Method::ErHybrid, Method::ErCurRes,
                           Method::ErCurRingFull, Method::Gps, Method::GpsCur, Method::Oracle}) {
        names.emplace_back(method_name(m));
    }
    return names;
}

}  // namespace

PYBIND11_MODULE(_gpsim, m) {
    m.doc() = "continual-learning replay-memory experiment engine";
    m.attr("__version__") = "0.1.0";

    const auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IngestError>(m, "IngestError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    m.def("run", &run_json, py::arg("config"), py::arg("method") = "", py::arg("data_root") = "",
          py::call_guard<py::gil_scoped_release>(),
          "Run the configured experiment; returns the result as a JSON string. `method` "
          "overrides the config's method when non-empty.");
    m.def("sweep", &sweep_json, py::arg("config"), py::arg("tasks"), py::arg("data_root") = "",
          py::call_guard<py::gil_scoped_release>(),
          "Evaluate the full switching-point objective profile for the given 1-based tasks.");
    m.def("diagnose_difficulty", &difficulty_json, py::arg("config"), py::arg("data_root") = "",
          py::call_guard<py::gil_scoped_release>(),
          "Train each task in isolation and report per-task accuracy and variance.");
    m.def("diagnose_zeroshot", &zeroshot_json, py::arg("config"), py::arg("data_root") = "",
          py::call_guard<py::gil_scoped_release>(),
          "Train the first task and measure transfer to the real and pseudo task sequences.");
    m.def("render_report", &report_text, py::arg("results"),
          "Compare result JSON strings from one benchmark; returns a text table.");
    m.def("report_curves_csv", &curves_csv, py::arg("results"),
          "Long-format per-task accuracy curves (CSV) for the given result JSON strings.");
    m.def("validate_result", &validate_result, py::arg("result"),
          "Validate a result JSON string (schema, matrix shape, stored averages) and return "
          "its normalized form.");
    m.def("methods", &method_names, "Names accepted as experiment methods.");
}
