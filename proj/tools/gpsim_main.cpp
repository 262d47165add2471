// Command-line front end: run experiments, search switching points offline,
// sweep objective profiles, compare result files, and run data diagnostics.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gpsim/experiment.hpp"

namespace {

using namespace gpsim;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestError(path + ": cannot open");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(path + ": invalid JSON: " + e.what());
    }
    return j;
}

std::string default_out_path(const std::string& config_path, const std::string& method) {
    const std::string stem = std::filesystem::path(config_path).stem().string();
    return stem + "-" + method + ".result.json";
}

int run_command(const std::string& config_path, const std::string& out_path,
                const std::string& method_override, const std::string& data_root,
                std::optional<Method> forced_method) {
    ExperimentConfig cfg = load_config(config_path);
    std::optional<Method> method = forced_method;
    if (!method_override.empty()) method = method_from_string(method_override);

    const ExperimentResult result = run_experiment(cfg, data_root, method);
    const std::string out =
        out_path.empty() ? default_out_path(config_path, result.method) : out_path;
    write_result(result, out);

    std::cout << result.method << ": average accuracy "
              << 100.0 * result.average_accuracy_mean << "% +/- "
              << 100.0 * result.average_accuracy_std << " over " << result.repeats.size()
              << " repeat(s); wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual-learning replay-memory experiment engine"};
    app.require_subcommand(1);

    std::string config_path, out_path, method_str, data_root, csv_path;
    std::vector<std::string> result_paths;
    std::vector<int> sweep_tasks;

    auto add_common = [&](CLI::App* cmd, bool with_method) {
        cmd->add_option("config", config_path, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", out_path, "output path (default ./<stem>-<method>.result.json)");
        cmd->add_option("--data-root", data_root,
                        "dataset directory (overrides config and $GPSIM_DATA)");
        if (with_method) {
            cmd->add_option("--method", method_str,
                            "override the config's method (er-res, er-ring-full, er-hybrid, "
                            "er-cur-res, er-cur-ring-full, gps, gps+cur, oracle)");
        }
    };

    CLI::App* run = app.add_subcommand("run", "train on the task stream and write results");
    add_common(run, true);

    CLI::App* oracle = app.add_subcommand(
        "oracle", "offline search for per-task switching points (method forced to oracle)");
    add_common(oracle, false);

    CLI::App* sweep = app.add_subcommand(
        "sweep", "evaluate the full switching-point objective profile for chosen tasks");
    add_common(sweep, false);
    sweep->add_option("--task", sweep_tasks, "1-based task index to sweep (repeatable)")
        ->required();

    CLI::App* report = app.add_subcommand("report", "compare result files on one benchmark");
    report->add_option("results", result_paths, "result JSON files")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("--csv", csv_path, "also write long-format per-task accuracy curves");

    CLI::App* diagnose = app.add_subcommand("diagnose", "benchmark diagnostics");
    diagnose->require_subcommand(1);
    CLI::App* difficulty = diagnose->add_subcommand(
        "difficulty", "train each task in isolation and report accuracy variance");
    add_common(difficulty, false);
    CLI::App* zeroshot = diagnose->add_subcommand(
        "zeroshot", "train the first task and measure transfer to real and pseudo tasks");
    add_common(zeroshot, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 4;
    }

    try {
        if (run->parsed()) {
            return run_command(config_path, out_path, method_str, data_root, std::nullopt);
        }
        if (oracle->parsed()) {
            return run_command(config_path, out_path, "", data_root, Method::Oracle);
        }
        if (sweep->parsed()) {
            const ExperimentConfig cfg = load_config(config_path);
            const nlohmann::json out = sweep_experiment(cfg, data_root, sweep_tasks);
            if (out_path.empty()) out_path = default_out_path(config_path, "sweep");
            std::ofstream f(out_path);
            if (!f) throw IngestError(out_path + ": cannot open for writing");
            f << out.dump(2) << "\n";
            std::cout << "wrote " << out_path << "\n";
            return 0;
        }
        if (report->parsed()) {
            std::vector<ExperimentResult> results;
            for (const auto& p : result_paths) {
                results.push_back(ExperimentResult::from_json(read_json_file(p)));
            }
            std::cout << render_report(results);
            if (!csv_path.empty()) {
                std::ofstream f(csv_path);
                if (!f) throw IngestError(csv_path + ": cannot open for writing");
                f << report_curves_csv(results);
                std::cout << "wrote " << csv_path << "\n";
            }
            return 0;
        }
        if (difficulty->parsed() || zeroshot->parsed()) {
            const ExperimentConfig cfg = load_config(config_path);
            const nlohmann::json out = difficulty->parsed()
                                           ? diagnose_difficulty(cfg, data_root)
                                           : diagnose_zeroshot(cfg, data_root);
            if (out_path.empty()) {
                std::cout << out.dump(2) << "\n";
            } else {
                std::ofstream f(out_path);
                if (!f) throw IngestError(out_path + ": cannot open for writing");
                f << out.dump(2) << "\n";
                std::cout << "wrote " << out_path << "\n";
            }
            return 0;
        }
    } catch (const Error& e) {
        nlohmann::json err{{"error", {{"category", e.category()}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        const std::string category = e.category();
        if (category == "config") return 2;
        if (category == "ingest") return 3;
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", {{"category", "internal"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 4;
}
