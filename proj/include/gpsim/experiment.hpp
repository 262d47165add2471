#pragma once

#include "gpsim/engine.hpp"

namespace gpsim {

enum class Method {
    ErRes,
    ErRingFull,
    ErHybrid,
    ErCurRes,
    ErCurRingFull,
    Gps,
    GpsCur,
    Oracle,
};

Method method_from_string(const std::string& name);
const char* method_name(Method m);

struct BenchmarkConfig {
    std::string kind;      // "pmnist" or "synthetic"
    std::string data_dir;  // pmnist: IDX directory; empty falls back to $GPSIM_DATA
    int num_tasks = 10;
    double subsample = 1.0;       // pmnist train subsample fraction
    SyntheticSpec synthetic;      // synthetic parameters (num_tasks mirrored)

    nlohmann::json to_json() const;
};

struct ExperimentConfig {
    BenchmarkConfig benchmark;
    Method method = Method::Gps;
    int memory_size = 1000;
    TrainConfig train;
    SimConfig sim;
    double gamma = 0.2;
    int repeats = 1;
    uint64_t seed = 1234;

    // Strict parse: unknown fields anywhere are configuration errors.
    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

ExperimentConfig load_config(const std::string& path);

// Builds the task stream. Benchmark randomness derives from the config seed's
// "data" namespace, so every repeat and every method sees identical tasks.
// data_root_override (from the CLI) takes precedence over the config's
// data_dir, which takes precedence over $GPSIM_DATA.
TaskStream build_benchmark(const ExperimentConfig& cfg, const std::string& data_root_override);

struct RepeatResult {
    uint64_t seed = 0;
    RunMetrics metrics;
    double wall_seconds = 0.0;
};

struct ExperimentResult {
    int schema_version = 1;
    nlohmann::json config;  // echo of the effective configuration
    std::string method;
    std::vector<RepeatResult> repeats;
    double average_accuracy_mean = 0.0;
    double average_accuracy_std = 0.0;
    double global_loss_mean = 0.0;

    nlohmann::json to_json() const;
    // Validating load: schema version, lower-triangular matrices, and stored
    // averages recomputed from the matrices must match.
    static ExperimentResult from_json(const nlohmann::json& j);
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& data_root_override,
                                std::optional<Method> method_override = std::nullopt);

// Writes <path> (JSON) and, next to it, the repeat-averaged accuracy matrix
// as CSV (path with extension replaced by .csv).
void write_result(const ExperimentResult& result, const std::string& path);

// Comparison table over results; refuses to mix different benchmarks.
std::string render_report(const std::vector<ExperimentResult>& results);

// Long-format per-task forgetting curves: method,repeat,after_task,task,accuracy.
std::string report_curves_csv(const std::vector<ExperimentResult>& results);

nlohmann::json sweep_experiment(const ExperimentConfig& cfg, const std::string& data_root_override,
                                const std::vector<int>& tasks);

nlohmann::json diagnose_difficulty(const ExperimentConfig& cfg,
                                   const std::string& data_root_override);

nlohmann::json diagnose_zeroshot(const ExperimentConfig& cfg,
                                 const std::string& data_root_override);

}  // namespace gpsim
