#include "gpsim/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace gpsim {

Method method_from_string(const std::string& name) {
    if (name == "er-res") return Method::ErRes;
    if (name == "er-ring-full") return Method::ErRingFull;
    if (name == "er-hybrid") return Method::ErHybrid;
    if (name == "er-cur-res") return Method::ErCurRes;
    if (name == "er-cur-ring-full") return Method::ErCurRingFull;
    if (name == "gps") return Method::Gps;
    if (name == "gps+cur") return Method::GpsCur;
    if (name == "oracle") return Method::Oracle;
    throw ConfigError("unknown method '" + name +
                      "' (expected er-res, er-ring-full, er-hybrid, er-cur-res, "
                      "er-cur-ring-full, gps, gps+cur or oracle)");
}

const char* method_name(Method m) {
    switch (m) {
        case Method::ErRes: return "er-res";
        case Method::ErRingFull: return "er-ring-full";
        case Method::ErHybrid: return "er-hybrid";
        case Method::ErCurRes: return "er-cur-res";
        case Method::ErCurRingFull: return "er-cur-ring-full";
        case Method::Gps: return "gps";
        case Method::GpsCur: return "gps+cur";
        case Method::Oracle: return "oracle";
    }
    return "unknown";
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("unknown field '" + key + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("field '" + key + "': " + e.what());
    }
}

}  // namespace

nlohmann::json BenchmarkConfig::to_json() const {
    if (kind == "pmnist") {
        return {{"kind", kind},
                {"data_dir", data_dir},
                {"num_tasks", num_tasks},
                {"subsample", subsample}};
    }
    nlohmann::json j{{"kind", kind},
                     {"num_tasks", num_tasks},
                     {"dim", synthetic.dim},
                     {"classes", synthetic.classes},
                     {"examples_per_task", synthetic.examples_per_task},
                     {"separation", synthetic.separation},
                     {"noise_sigma", synthetic.noise_sigma}};
    if (!synthetic.class_freq.empty()) j["class_freq"] = synthetic.class_freq;
    if (synthetic.image_shape) {
        j["image_shape"] = {(*synthetic.image_shape)[0], (*synthetic.image_shape)[1]};
    }
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    reject_unknown(j, {"benchmark", "method", "memory_size", "train", "sim", "gamma", "repeats",
                       "seed"},
                   "config");
    if (!j.contains("benchmark")) throw ConfigError("config requires a 'benchmark' object");

    ExperimentConfig cfg;
    const nlohmann::json& b = j.at("benchmark");
    const std::string kind = get_or<std::string>(b, "kind", "");
    if (kind == "pmnist") {
        reject_unknown(b, {"kind", "data_dir", "num_tasks", "subsample"}, "benchmark");
        cfg.benchmark.kind = kind;
        cfg.benchmark.data_dir = get_or<std::string>(b, "data_dir", "");
        cfg.benchmark.num_tasks = get_or<int>(b, "num_tasks", 10);
        cfg.benchmark.subsample = get_or<double>(b, "subsample", 1.0);
    } else if (kind == "synthetic") {
        reject_unknown(b,
                       {"kind", "num_tasks", "dim", "classes", "examples_per_task", "separation",
                        "noise_sigma", "class_freq", "image_shape"},
                       "benchmark");
        cfg.benchmark.kind = kind;
        cfg.benchmark.num_tasks = get_or<int>(b, "num_tasks", 3);
        cfg.benchmark.synthetic.num_tasks = cfg.benchmark.num_tasks;
        cfg.benchmark.synthetic.dim = get_or<int>(b, "dim", 16);
        cfg.benchmark.synthetic.classes = get_or<int>(b, "classes", 4);
        cfg.benchmark.synthetic.examples_per_task = get_or<int>(b, "examples_per_task", 500);
        cfg.benchmark.synthetic.separation = get_or<double>(b, "separation", 3.0);
        cfg.benchmark.synthetic.noise_sigma = get_or<double>(b, "noise_sigma", 1.0);
        cfg.benchmark.synthetic.class_freq =
            get_or<std::vector<double>>(b, "class_freq", {});
        if (b.contains("image_shape")) {
            const auto shape = b.at("image_shape").get<std::vector<int>>();
            if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1) {
                throw ConfigError("image_shape must be [height, width]");
            }
            cfg.benchmark.synthetic.image_shape = {{shape[0], shape[1]}};
        }
    } else {
        throw ConfigError("benchmark.kind must be 'pmnist' or 'synthetic', got '" + kind + "'");
    }
    if (cfg.benchmark.num_tasks < 1) throw ConfigError("num_tasks must be >= 1");
    if (cfg.benchmark.subsample <= 0.0 || cfg.benchmark.subsample > 1.0) {
        throw ConfigError("subsample must be in (0, 1]");
    }

    cfg.method = method_from_string(get_or<std::string>(j, "method", "gps"));
    cfg.memory_size = get_or<int>(j, "memory_size", 1000);
    if (cfg.memory_size < 1) throw ConfigError("memory_size must be >= 1");

    if (j.contains("train")) {
        const nlohmann::json& t = j.at("train");
        reject_unknown(t, {"lr", "epochs", "batch_size", "lambda", "hidden"}, "train");
        cfg.train.lr = get_or<double>(t, "lr", cfg.train.lr);
        cfg.train.epochs = get_or<int>(t, "epochs", cfg.train.epochs);
        cfg.train.batch_size = get_or<int>(t, "batch_size", cfg.train.batch_size);
        cfg.train.lambda = get_or<double>(t, "lambda", cfg.train.lambda);
        cfg.train.hidden = get_or<std::vector<int>>(t, "hidden", cfg.train.hidden);
    }
    if (cfg.train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (cfg.train.lr <= 0.0) throw ConfigError("train.lr must be > 0");
    if (cfg.train.lambda < 0.0) throw ConfigError("train.lambda must be >= 0");
    for (int h : cfg.train.hidden) {
        if (h < 1) throw ConfigError("train.hidden dims must be >= 1");
    }

    if (j.contains("sim")) {
        const nlohmann::json& s = j.at("sim");
        reject_unknown(s,
                       {"window", "pseudo_epochs", "examples_per_pseudo_task", "min_stride",
                        "max_stride", "synthesis", "rotation_step_degrees", "blur_sigma_step",
                        "blur_kernel", "objective"},
                       "sim");
        cfg.sim.window = get_or<int>(s, "window", cfg.sim.window);
        cfg.sim.pseudo_epochs = get_or<int>(s, "pseudo_epochs", cfg.sim.pseudo_epochs);
        cfg.sim.examples_per_pseudo_task =
            get_or<int>(s, "examples_per_pseudo_task", cfg.sim.examples_per_pseudo_task);
        cfg.sim.min_stride = get_or<int>(s, "min_stride", cfg.sim.min_stride);
        cfg.sim.max_stride = get_or<int>(s, "max_stride", cfg.sim.max_stride);
        cfg.sim.synthesis =
            synthesis_method_from_string(get_or<std::string>(s, "synthesis", "permutation"));
        cfg.sim.rotation_step_degrees =
            get_or<double>(s, "rotation_step_degrees", cfg.sim.rotation_step_degrees);
        cfg.sim.blur_sigma_step = get_or<double>(s, "blur_sigma_step", cfg.sim.blur_sigma_step);
        cfg.sim.blur_kernel = get_or<int>(s, "blur_kernel", cfg.sim.blur_kernel);
        const std::string obj = get_or<std::string>(s, "objective", "accuracy");
        if (obj == "accuracy") {
            cfg.sim.objective = SimConfig::Objective::Accuracy;
        } else if (obj == "loss") {
            cfg.sim.objective = SimConfig::Objective::Loss;
        } else {
            throw ConfigError("sim.objective must be 'accuracy' or 'loss', got '" + obj + "'");
        }
    }
    if (cfg.sim.window < 1) throw ConfigError("sim.window must be >= 1");
    if (cfg.sim.pseudo_epochs < 1) throw ConfigError("sim.pseudo_epochs must be >= 1");
    if (cfg.sim.min_stride < 1) throw ConfigError("sim.min_stride must be >= 1");
    if (cfg.sim.max_stride < cfg.sim.min_stride) {
        throw ConfigError("sim.max_stride must be >= sim.min_stride");
    }

    cfg.gamma = get_or<double>(j, "gamma", cfg.gamma);
    if (cfg.gamma <= 0.0 || cfg.gamma > 1.0) throw ConfigError("gamma must be in (0, 1]");
    cfg.repeats = get_or<int>(j, "repeats", cfg.repeats);
    if (cfg.repeats < 1) throw ConfigError("repeats must be >= 1");
    cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
    return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
    const char* obj = sim.objective == SimConfig::Objective::Accuracy ? "accuracy" : "loss";
    return {{"benchmark", benchmark.to_json()},
            {"method", method_name(method)},
            {"memory_size", memory_size},
            {"train",
             {{"lr", train.lr},
              {"epochs", train.epochs},
              {"batch_size", train.batch_size},
              {"lambda", train.lambda},
              {"hidden", train.hidden}}},
            {"sim",
             {{"window", sim.window},
              {"pseudo_epochs", sim.pseudo_epochs},
              {"examples_per_pseudo_task", sim.examples_per_pseudo_task},
              {"min_stride", sim.min_stride},
              {"max_stride", sim.max_stride},
              {"synthesis", synthesis_method_name(sim.synthesis)},
              {"rotation_step_degrees", sim.rotation_step_degrees},
              {"blur_sigma_step", sim.blur_sigma_step},
              {"blur_kernel", sim.blur_kernel},
              {"objective", obj}}},
            {"gamma", gamma},
            {"repeats", repeats},
            {"seed", seed}};
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestError(path + ": cannot open config");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

TaskStream build_benchmark(const ExperimentConfig& cfg, const std::string& data_root_override) {
    const uint64_t data_seed = seed_for(cfg.seed, "data");
    if (cfg.benchmark.kind == "synthetic") {
        SyntheticSpec spec = cfg.benchmark.synthetic;
        spec.num_tasks = cfg.benchmark.num_tasks;
        spec.seed = data_seed;
        return build_synthetic_stream(spec);
    }

    std::string root = data_root_override;
    if (root.empty()) root = cfg.benchmark.data_dir;
    if (root.empty()) {
        const char* env = std::getenv("GPSIM_DATA");
        if (env) root = env;
    }
    if (root.empty()) {
        throw IngestError(
            "pmnist benchmark needs a dataset directory: set benchmark.data_dir, pass "
            "--data-root, or export GPSIM_DATA");
    }
    auto train = std::make_shared<Dataset>(
        load_idx(root + "/train-images-idx3-ubyte", root + "/train-labels-idx1-ubyte"));
    auto test = std::make_shared<Dataset>(
        load_idx(root + "/t10k-images-idx3-ubyte", root + "/t10k-labels-idx1-ubyte"));

    std::vector<uint64_t> seeds;
    for (int i = 0; i < cfg.benchmark.num_tasks; ++i) {
        seeds.push_back(seed_for(data_seed, "bench-perm", i));
    }
    return build_permuted_stream(train, test, cfg.benchmark.num_tasks, seeds,
                                 cfg.benchmark.subsample, seed_for(data_seed, "subsample"));
}

namespace {

struct MethodSetup {
    FillPolicy policy;
    std::unique_ptr<SwitchPlanner> planner;
};

MethodSetup setup_for(Method m) {
    switch (m) {
        case Method::ErRes:
            return {FillPolicy::Reservoir, std::make_unique<StaticPlanner>()};
        case Method::ErRingFull:
            return {FillPolicy::RingFull, std::make_unique<StaticPlanner>()};
        case Method::ErHybrid:
            return {FillPolicy::Hybrid, std::make_unique<StaticPlanner>()};
        case Method::ErCurRes:
            return {FillPolicy::CurRes, std::make_unique<StaticPlanner>()};
        case Method::ErCurRingFull:
            return {FillPolicy::CurRingFull, std::make_unique<StaticPlanner>()};
        case Method::Gps:
            return {FillPolicy::Mixed, std::make_unique<GpsPlanner>()};
        case Method::GpsCur:
            return {FillPolicy::CurMixed, std::make_unique<GpsPlanner>()};
        case Method::Oracle:
            return {FillPolicy::Mixed, std::make_unique<OraclePlanner>()};
    }
    throw ContractError("unhandled method");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::string& data_root_override,
                                std::optional<Method> method_override) {
    ExperimentConfig effective = cfg;
    if (method_override) effective.method = *method_override;

    const TaskStream stream = build_benchmark(effective, data_root_override);
    MethodSetup setup = setup_for(effective.method);

    LocalUpdateSpec spec;
    spec.train = effective.train;
    spec.policy = setup.policy;
    spec.gamma = effective.gamma;

    ExperimentResult result;
    result.config = effective.to_json();
    result.method = method_name(effective.method);

    std::vector<double> averages;
    double loss_sum = 0.0;
    for (int r = 0; r < effective.repeats; ++r) {
        const uint64_t run_seed = seed_for(effective.seed, "repeat", r);
        const auto start = std::chrono::steady_clock::now();
        RepeatResult rep;
        rep.seed = run_seed;
        rep.metrics = run_stream(stream, effective.memory_size, spec, effective.sim,
                                 *setup.planner, run_seed);
        rep.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        averages.push_back(rep.metrics.average_accuracy);
        loss_sum += rep.metrics.global_loss_total;
        result.repeats.push_back(std::move(rep));
    }

    const double n = static_cast<double>(averages.size());
    double mean = 0.0;
    for (double a : averages) mean += a;
    mean /= n;
    double var = 0.0;
    for (double a : averages) var += (a - mean) * (a - mean);
    result.average_accuracy_mean = mean;
    result.average_accuracy_std = averages.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    result.global_loss_mean = loss_sum / n;
    return result;
}

nlohmann::json ExperimentResult::to_json() const {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& r : repeats) {
        nlohmann::json rep = r.metrics.to_json();
        rep["seed"] = r.seed;
        rep["wall_seconds"] = r.wall_seconds;
        reps.push_back(std::move(rep));
    }
    return {{"schema_version", schema_version},
            {"config", config},
            {"method", method},
            {"repeats", reps},
            {"aggregate",
             {{"average_accuracy_mean", average_accuracy_mean},
              {"average_accuracy_std", average_accuracy_std},
              {"global_loss_mean", global_loss_mean}}}};
}

ExperimentResult ExperimentResult::from_json(const nlohmann::json& j) {
    ExperimentResult out;
    const int version = j.at("schema_version").get<int>();
    if (version != 1) {
        throw ConfigError("unsupported result schema_version " + std::to_string(version));
    }
    out.config = j.at("config");
    out.method = j.at("method").get<std::string>();
    for (const auto& rep : j.at("repeats")) {
        RepeatResult r;
        r.seed = rep.at("seed").get<uint64_t>();
        r.wall_seconds = rep.at("wall_seconds").get<double>();

        const auto& matrix = rep.at("accuracy_matrix");
        const int t = static_cast<int>(matrix.size());
        r.metrics.acc_matrix = Eigen::MatrixXd::Zero(t, t);
        for (int i = 0; i < t; ++i) {
            const auto& row = matrix.at(static_cast<size_t>(i));
            if (static_cast<int>(row.size()) != i + 1) {
                throw ConfigError("accuracy matrix row " + std::to_string(i + 1) + " has " +
                                  std::to_string(row.size()) + " entries, expected " +
                                  std::to_string(i + 1) + " (lower-triangular)");
            }
            for (int jj = 0; jj <= i; ++jj) {
                r.metrics.acc_matrix(i, jj) = row.at(static_cast<size_t>(jj)).get<double>();
            }
        }
        r.metrics.final_task_accuracy =
            rep.at("final_task_accuracy").get<std::vector<double>>();
        r.metrics.average_accuracy = rep.at("average_accuracy").get<double>();
        double recomputed = 0.0;
        for (int jj = 0; jj < t; ++jj) recomputed += r.metrics.acc_matrix(t - 1, jj);
        recomputed /= t;
        if (std::abs(recomputed - r.metrics.average_accuracy) > 1e-9) {
            throw ConfigError("stored average_accuracy " +
                              std::to_string(r.metrics.average_accuracy) +
                              " does not match matrix recomputation " +
                              std::to_string(recomputed));
        }
        r.metrics.per_task_loss = rep.at("per_task_loss").get<std::vector<double>>();
        r.metrics.global_loss_total = rep.at("global_loss_total").get<double>();
        r.metrics.plan = SwitchingPlan::from_json(rep.at("plan"));
        r.metrics.hybrid_switched = rep.at("hybrid_switched").get<bool>();
        out.repeats.push_back(std::move(r));
    }
    out.average_accuracy_mean = j.at("aggregate").at("average_accuracy_mean").get<double>();
    out.average_accuracy_std = j.at("aggregate").at("average_accuracy_std").get<double>();
    out.global_loss_mean = j.at("aggregate").at("global_loss_mean").get<double>();
    return out;
}

void write_result(const ExperimentResult& result, const std::string& path) {
    {
        std::ofstream f(path);
        if (!f) throw IngestError(path + ": cannot open for writing");
        f << result.to_json().dump(2) << "\n";
    }

    std::string csv_path = path;
    const size_t dot = csv_path.find_last_of('.');
    if (dot != std::string::npos) csv_path.resize(dot);
    csv_path += ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IngestError(csv_path + ": cannot open for writing");

    const int t = static_cast<int>(result.repeats.front().metrics.acc_matrix.rows());
    csv << "after_task";
    for (int j = 1; j <= t; ++j) csv << ",task_" << j;
    csv << "\n";
    for (int i = 0; i < t; ++i) {
        csv << (i + 1);
        for (int j = 0; j < t; ++j) {
            csv << ",";
            if (j <= i) {
                double mean = 0.0;
                for (const auto& rep : result.repeats) mean += rep.metrics.acc_matrix(i, j);
                csv << mean / static_cast<double>(result.repeats.size());
            }
        }
        csv << "\n";
    }
}

std::string render_report(const std::vector<ExperimentResult>& results) {
    if (results.empty()) throw ConfigError("report needs at least one result");
    const nlohmann::json benchmark = results.front().config.at("benchmark");
    for (const auto& r : results) {
        if (r.config.at("benchmark") != benchmark) {
            throw ConfigError(
                "results come from different benchmarks and cannot be compared: " +
                benchmark.dump() + " vs " + r.config.at("benchmark").dump());
        }
    }

    std::vector<const ExperimentResult*> order;
    for (const auto& r : results) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        return a->average_accuracy_mean > b->average_accuracy_mean;
    });

    std::ostringstream out;
    out << "benchmark: " << benchmark.at("kind").get<std::string>() << ", "
        << benchmark.at("num_tasks").get<int>() << " tasks\n";
    char line[160];
    snprintf(line, sizeof line, "%-18s %8s %14s %12s %8s\n", "method", "repeats", "avg acc (%)",
             "+/- std", "loss");
    out << line;
    for (const auto* r : order) {
        snprintf(line, sizeof line, "%-18s %8zu %14.2f %12.2f %8.3f\n", r->method.c_str(),
                 r->repeats.size(), 100.0 * r->average_accuracy_mean,
                 100.0 * r->average_accuracy_std, r->global_loss_mean);
        out << line;
    }
    return out.str();
}

std::string report_curves_csv(const std::vector<ExperimentResult>& results) {
    std::ostringstream out;
    out << "method,repeat,after_task,task,accuracy\n";
    for (const auto& r : results) {
        for (size_t rep = 0; rep < r.repeats.size(); ++rep) {
            const auto& m = r.repeats[rep].metrics.acc_matrix;
            for (int i = 0; i < m.rows(); ++i) {
                for (int j = 0; j <= i; ++j) {
                    out << r.method << "," << rep << "," << (i + 1) << "," << (j + 1) << ","
                        << m(i, j) << "\n";
                }
            }
        }
    }
    return out.str();
}

nlohmann::json sweep_experiment(const ExperimentConfig& cfg,
                                const std::string& data_root_override,
                                const std::vector<int>& tasks) {
    const TaskStream stream = build_benchmark(cfg, data_root_override);
    LocalUpdateSpec spec;
    spec.train = cfg.train;
    spec.policy = FillPolicy::Mixed;
    spec.gamma = cfg.gamma;

    const uint64_t run_seed = seed_for(cfg.seed, "repeat", 0);
    const auto profiles =
        sweep_switching_points(stream, cfg.memory_size, spec, cfg.sim, tasks, run_seed);

    nlohmann::json out;
    out["schema_version"] = 1;
    out["config"] = cfg.to_json();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : profiles) arr.push_back(p.to_json());
    out["sweeps"] = arr;
    return out;
}

nlohmann::json diagnose_difficulty(const ExperimentConfig& cfg,
                                   const std::string& data_root_override) {
    const TaskStream stream = build_benchmark(cfg, data_root_override);
    std::vector<double> accs;
    nlohmann::json per_task = nlohmann::json::array();
    for (int i = 0; i < stream.size(); ++i) {
        const double acc = end_to_end_difficulty(stream.task(i), cfg.train,
                                                 seed_for(cfg.seed, "difficulty", i));
        accs.push_back(acc);
        per_task.push_back({{"task_id", stream.task(i).id}, {"accuracy", acc}});
    }
    auto variance_of = [](std::vector<double> xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        return var / static_cast<double>(xs.size());
    };
    const int head = std::min<int>(5, static_cast<int>(accs.size()));
    const std::vector<double> first(accs.begin(), accs.begin() + head);
    // Variances are reported on percentage points, matching the accuracy table
    // convention.
    std::vector<double> accs_pct, first_pct;
    for (double a : accs) accs_pct.push_back(100.0 * a);
    for (double a : first) first_pct.push_back(100.0 * a);
    return {{"schema_version", 1},
            {"config", cfg.to_json()},
            {"per_task", per_task},
            {"variance_all_pct", variance_of(accs_pct)},
            {"variance_first5_pct", variance_of(first_pct)}};
}

nlohmann::json diagnose_zeroshot(const ExperimentConfig& cfg,
                                 const std::string& data_root_override) {
    const TaskStream stream = build_benchmark(cfg, data_root_override);
    const Task& base = stream.task(0);

    std::vector<int> dims{base.feature_dim()};
    dims.insert(dims.end(), cfg.train.hidden.begin(), cfg.train.hidden.end());
    dims.push_back(stream.num_classes);
    Mlp net = Mlp::make(dims, seed_for(cfg.seed, "zeroshot-init"));
    train_single_task(net, base, cfg.train, seed_for(cfg.seed, "zeroshot-train"));

    nlohmann::json real = nlohmann::json::array();
    real.push_back({{"task_id", base.id}, {"accuracy", evaluate_task(net, base).accuracy}});
    for (int i = 1; i < stream.size(); ++i) {
        real.push_back({{"task_id", stream.task(i).id},
                        {"accuracy", zero_shot_transfer(net, stream.task(i))}});
    }

    SynthesisSpec synth;
    synth.method = cfg.sim.synthesis;
    synth.count = std::min(cfg.sim.window, std::max(1, stream.size() - 1));
    synth.examples_per_task =
        cfg.sim.examples_per_pseudo_task > 0 ? cfg.sim.examples_per_pseudo_task : cfg.memory_size;
    synth.seed = seed_for(cfg.seed, "zeroshot-synthesize");
    synth.rotation_step_degrees = cfg.sim.rotation_step_degrees;
    synth.blur_sigma_step = cfg.sim.blur_sigma_step;
    synth.blur_kernel = cfg.sim.blur_kernel;
    synth.first_task_id = stream.task(stream.size() - 1).id + 1;
    synth.include_test = true;
    synth.test_limit = 2000;

    nlohmann::json pseudo = nlohmann::json::array();
    for (const Task& pt : synthesize_sequence(base, synth)) {
        pseudo.push_back({{"step", pt.id - synth.first_task_id + 1},
                          {"accuracy", zero_shot_transfer(net, pt)}});
    }
    return {{"schema_version", 1},
            {"config", cfg.to_json()},
            {"synthesis", synthesis_method_name(cfg.sim.synthesis)},
            {"real", real},
            {"pseudo", pseudo}};
}

}  // namespace gpsim
