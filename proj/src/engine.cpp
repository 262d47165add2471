#include "gpsim/engine.hpp"

#include <algorithm>
#include <cmath>

namespace gpsim {

bool better_candidate(const CandidateScore& a, const CandidateScore& b,
                      SimConfig::Objective objective) {
    if (objective == SimConfig::Objective::Accuracy) {
        if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
        return a.loss < b.loss;
    }
    if (a.loss != b.loss) return a.loss < b.loss;
    return a.accuracy > b.accuracy;
}

nlohmann::json SearchTrace::to_json() const {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& [a, s] : evaluated) {
        evals.push_back({{"a", a}, {"loss", s.loss}, {"accuracy", s.accuracy}});
    }
    return {{"task_id", task_id},     {"upper", upper},
            {"stride", stride},       {"chosen", chosen},
            {"calls", calls},         {"fallback_used", fallback_used},
            {"degenerate", degenerate}, {"evaluated", evals}};
}

SearchTrace bisect_search(int upper, int stride, SimConfig::Objective objective,
                          const std::function<CandidateScore(int)>& eval) {
    if (upper < 0) throw ContractError("search upper bound must be >= 0");
    if (stride < 1) throw ContractError("search stride must be >= 1");

    SearchTrace trace;
    trace.upper = upper;
    trace.stride = stride;

    const int call_budget =
        2 * static_cast<int>(std::ceil(std::log2(std::max(2.0, static_cast<double>(upper) /
                                                                   stride)))) +
        3;
    bool exhausted = false;
    auto score = [&](int a) -> const CandidateScore* {
        auto it = trace.evaluated.find(a);
        if (it != trace.evaluated.end()) return &it->second;
        if (trace.calls >= call_budget) {
            exhausted = true;
            return nullptr;
        }
        ++trace.calls;
        return &trace.evaluated.emplace(a, eval(a)).first->second;
    };

    if (upper < stride) {
        trace.degenerate = true;
        score(upper);
        trace.chosen = upper;
        return trace;
    }

    int start = 0;
    int end = upper;
    while (end - start >= stride) {
        const int mid = (start + end) / 2;
        const int left = std::max(0, mid - stride);
        const int right = std::min(upper, mid + stride);

        const CandidateScore* sm = score(mid);
        if (!sm) break;
        const CandidateScore* sl = score(left);
        if (!sl) break;
        if (left != mid && better_candidate(*sl, *sm, objective)) {
            if (end == mid) break;  // no progress possible
            end = mid;
            continue;
        }
        const CandidateScore* sr = score(right);
        if (!sr) break;
        if (right != mid && better_candidate(*sr, *sm, objective)) {
            if (start == mid) break;
            start = mid;
            continue;
        }
        // mid is at least as good as both neighbors: either an interior
        // optimum or a plateau; both end the search here.
        if (!(better_candidate(*sm, *sl, objective) && better_candidate(*sm, *sr, objective))) {
            trace.fallback_used = true;
        }
        break;
    }
    if (exhausted) trace.fallback_used = true;

    // Best evaluated point, ties to the smallest a (map order is ascending).
    const int first = trace.evaluated.begin()->first;
    trace.chosen = first;
    CandidateScore best = trace.evaluated.begin()->second;
    for (const auto& [a, s] : trace.evaluated) {
        if (better_candidate(s, best, objective)) {
            best = s;
            trace.chosen = a;
        }
    }
    return trace;
}

CandidateScore global_sim(int candidate, const std::vector<Task>& pseudo_seq,
                          const TaskStream& stream, int task_index, const Mlp& net,
                          const MemoryBuffer& buffer, const SwitchingPlan& plan,
                          const LocalUpdateSpec& spec, const SimConfig& sim,
                          LocalUpdater& updater, uint64_t sim_seed) {
    Mlp m = net;
    MemoryBuffer buf = buffer;
    SwitchingPlan p = plan;
    p.points[stream.task(task_index - 1).id] = candidate;
    buf.rebuild_for_new_task(task_index, p, seed_for(sim_seed, "shrink", 0));

    LocalUpdateSpec pseudo_spec = spec;
    pseudo_spec.train.epochs = sim.pseudo_epochs;
    pseudo_spec.policy = FillPolicy::Reservoir;  // pseudo memory: random selection
    for (size_t k = 0; k < pseudo_seq.size(); ++k) {
        const Task& pt = pseudo_seq[k];
        updater.update(m, pt, buf, pseudo_spec, seed_for(sim_seed, "pseudo", static_cast<int>(k)));
        if (k + 1 < pseudo_seq.size()) {
            p.points[pt.id] = 0;
            buf.rebuild_for_new_task(task_index + static_cast<int>(k) + 1, p,
                                     seed_for(sim_seed, "shrink", static_cast<int>(k) + 1));
        }
    }

    const EvalResult r = evaluate_on_stream_task(m, stream, task_index - 1);
    return {r.mean_loss, r.accuracy};
}

PlanDecision StaticPlanner::choose(const PlanContext& ctx) {
    const int budget = ctx.buffer.capacity() / ctx.task_index;
    switch (ctx.spec.policy) {
        case FillPolicy::Reservoir:
        case FillPolicy::CurRes:
            return {0, std::nullopt};
        case FillPolicy::RingFull:
        case FillPolicy::CurRingFull:
            return {budget, std::nullopt};
        case FillPolicy::Hybrid:
            return {ctx.buffer.hybrid_switched() ? budget : 0, std::nullopt};
        default:
            throw ContractError("static planner cannot drive a mixed staging policy");
    }
}

PlanDecision FixedPlanPlanner::choose(const PlanContext& ctx) {
    const int id = ctx.stream.task(ctx.task_index - 1).id;
    const auto it = points_.find(id);
    if (it == points_.end()) {
        throw ContractError("fixed plan has no switching point for task " + std::to_string(id));
    }
    return {it->second, std::nullopt};
}

namespace {

int clamped_stride(int budget, const SimConfig& sim) {
    return std::clamp(budget / 5, sim.min_stride, sim.max_stride);
}

}  // namespace

PlanDecision GpsPlanner::choose(const PlanContext& ctx) {
    const int i = ctx.task_index;
    const int total = ctx.stream.size();
    const int budget = ctx.buffer.capacity() / i;
    const int stride = clamped_stride(budget, ctx.sim);

    SynthesisSpec synth;
    synth.method = ctx.sim.synthesis;
    synth.count = std::min(ctx.sim.window, total - i);
    synth.examples_per_task = ctx.sim.examples_per_pseudo_task > 0
                                  ? ctx.sim.examples_per_pseudo_task
                                  : ctx.buffer.capacity();
    synth.seed = seed_for(ctx.run_seed, "synthesize", i);
    synth.rotation_step_degrees = ctx.sim.rotation_step_degrees;
    synth.blur_sigma_step = ctx.sim.blur_sigma_step;
    synth.blur_kernel = ctx.sim.blur_kernel;
    synth.first_task_id = ctx.stream.task(total - 1).id + 1;
    const std::vector<Task> pseudo_seq =
        synthesize_sequence(ctx.stream.task(i - 1), synth);

    const uint64_t sim_seed = seed_for(ctx.run_seed, "sim", i);
    SearchTrace trace = bisect_search(budget, stride, ctx.sim.objective, [&](int a) {
        return global_sim(a, pseudo_seq, ctx.stream, i, ctx.net, ctx.buffer, ctx.plan, ctx.spec,
                          ctx.sim, ctx.updater, sim_seed);
    });
    trace.task_id = ctx.stream.task(i - 1).id;
    return {trace.chosen, trace};
}

namespace {

// Replays the real remainder of the stream from a candidate construction and
// scores the searched task under the final parameters.
CandidateScore oracle_replay(int candidate, const PlanContext& ctx) {
    const int i = ctx.task_index;
    Mlp m = ctx.net;
    MemoryBuffer buf = ctx.buffer;
    SwitchingPlan p = ctx.plan;
    p.points[ctx.stream.task(i - 1).id] = candidate;
    buf.rebuild_for_new_task(i, p, seed_for(ctx.run_seed, "shrink", i));

    LocalUpdateSpec future_spec = ctx.spec;
    future_spec.policy = FillPolicy::Reservoir;  // future slots: random selection
    for (int k = i + 1; k <= ctx.stream.size(); ++k) {
        const Task& tk = ctx.stream.task(k - 1);
        ctx.updater.update(m, tk, buf, future_spec, seed_for(ctx.run_seed, "task", k));
        if (k < ctx.stream.size()) {
            p.points[tk.id] = 0;
            buf.rebuild_for_new_task(k, p, seed_for(ctx.run_seed, "shrink", k));
        }
    }
    const EvalResult r = evaluate_on_stream_task(m, ctx.stream, i - 1);
    return {r.mean_loss, r.accuracy};
}

}  // namespace

PlanDecision OraclePlanner::choose(const PlanContext& ctx) {
    const int budget = ctx.buffer.capacity() / ctx.task_index;
    const int stride = clamped_stride(budget, ctx.sim);
    SearchTrace trace = bisect_search(budget, stride, ctx.sim.objective,
                                      [&](int a) { return oracle_replay(a, ctx); });
    trace.task_id = ctx.stream.task(ctx.task_index - 1).id;
    return {trace.chosen, trace};
}

nlohmann::json RunMetrics::to_json() const {
    const int t = static_cast<int>(acc_matrix.rows());
    nlohmann::json matrix = nlohmann::json::array();
    for (int i = 0; i < t; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j <= i; ++j) row.push_back(acc_matrix(i, j));
        matrix.push_back(row);
    }
    nlohmann::json traces_json = nlohmann::json::array();
    for (const auto& tr : traces) traces_json.push_back(tr.to_json());
    return {{"accuracy_matrix", matrix},
            {"final_task_accuracy", final_task_accuracy},
            {"average_accuracy", average_accuracy},
            {"per_task_loss", per_task_loss},
            {"global_loss_total", global_loss_total},
            {"plan", plan.to_json()},
            {"traces", traces_json},
            {"hybrid_switched", hybrid_switched}};
}

RunMetrics run_stream(const TaskStream& stream, int capacity, const LocalUpdateSpec& spec,
                      const SimConfig& sim, SwitchPlanner& planner, uint64_t run_seed,
                      LocalUpdater* updater, Mlp* final_net) {
    if (stream.size() < 1) throw ConfigError("stream has no tasks");
    ReplayUpdater default_updater;
    LocalUpdater& upd = updater ? *updater : default_updater;

    const int dim = stream.task(0).feature_dim();
    for (const Task& t : stream.tasks) {
        if (t.feature_dim() != dim) {
            throw ContractError("task " + std::to_string(t.id) + " feature dim " +
                                std::to_string(t.feature_dim()) + " differs from " +
                                std::to_string(dim));
        }
    }
    std::vector<int> dims{dim};
    dims.insert(dims.end(), spec.train.hidden.begin(), spec.train.hidden.end());
    dims.push_back(stream.num_classes);
    Mlp net = Mlp::make(dims, seed_for(run_seed, "init"));

    MemoryBuffer buffer(capacity);
    RunMetrics metrics;
    metrics.plan.provenance = planner.provenance();
    const int total = stream.size();
    metrics.acc_matrix = Eigen::MatrixXd::Zero(total, total);

    for (int i = 1; i <= total; ++i) {
        const Task& task = stream.task(i - 1);
        upd.update(net, task, buffer, spec, seed_for(run_seed, "task", i));

        for (int j = 1; j <= i; ++j) {
            metrics.acc_matrix(i - 1, j - 1) =
                evaluate_on_stream_task(net, stream, j - 1).accuracy;
        }

        if (i < total) {
            PlanDecision decision = planner.choose(
                {stream, i, net, buffer, metrics.plan, spec, sim, run_seed, upd});
            metrics.plan.points[task.id] = decision.a;
            if (decision.trace) metrics.traces.push_back(std::move(*decision.trace));
            buffer.rebuild_for_new_task(i, metrics.plan, seed_for(run_seed, "shrink", i));
        }
    }

    metrics.final_task_accuracy.resize(static_cast<size_t>(total));
    for (int j = 0; j < total; ++j) {
        metrics.final_task_accuracy[static_cast<size_t>(j)] = metrics.acc_matrix(total - 1, j);
    }
    metrics.average_accuracy =
        metrics.acc_matrix.row(total - 1).sum() / static_cast<double>(total);
    std::tie(metrics.global_loss_total, metrics.per_task_loss) = global_loss(net, stream);
    metrics.hybrid_switched = buffer.hybrid_switched();
    if (final_net) *final_net = std::move(net);
    return metrics;
}

std::pair<double, std::vector<double>> global_loss(const Mlp& net, const TaskStream& stream) {
    std::vector<double> per_task;
    double total = 0.0;
    for (int j = 0; j < stream.size(); ++j) {
        const double l = evaluate_on_stream_task(net, stream, j).mean_loss;
        per_task.push_back(l);
        total += l;
    }
    return {total, per_task};
}

bool profile_unimodal(const std::vector<double>& losses) {
    bool rising = false;
    for (size_t i = 1; i < losses.size(); ++i) {
        const double d = losses[i] - losses[i - 1];
        if (d == 0.0) continue;
        if (d > 0.0) {
            rising = true;
        } else if (rising) {
            return false;  // fell again after rising
        }
    }
    return true;
}

nlohmann::json SweepProfile::to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& [a, s] : profile) {
        pts.push_back({{"a", a}, {"loss", s.loss}, {"accuracy", s.accuracy}});
    }
    return {{"task_id", task_id},
            {"stride", stride},
            {"loss_unimodal", loss_unimodal},
            {"profile", pts}};
}

std::vector<SweepProfile> sweep_switching_points(const TaskStream& stream, int capacity,
                                                 const LocalUpdateSpec& spec,
                                                 const SimConfig& sim,
                                                 const std::vector<int>& tasks_to_sweep,
                                                 uint64_t run_seed) {
    for (int t : tasks_to_sweep) {
        if (t < 1 || t > stream.size()) {
            throw ConfigError("sweep task " + std::to_string(t) + " outside stream [1, " +
                              std::to_string(stream.size()) + "]");
        }
    }
    ReplayUpdater updater;

    // A planner that exhaustively grids the swept tasks and stays at 0 (pure
    // random selection) elsewhere; swept tasks continue with the grid best so
    // consecutive sweeps compose.
    struct SweepPlanner final : SwitchPlanner {
        std::vector<int> targets;
        std::vector<SweepProfile> profiles;

        PlanDecision choose(const PlanContext& ctx) override {
            const int budget = ctx.buffer.capacity() / ctx.task_index;
            const bool swept = std::find(targets.begin(), targets.end(), ctx.task_index) !=
                               targets.end();
            if (!swept) return {0, std::nullopt};

            SweepProfile prof;
            prof.task_id = ctx.stream.task(ctx.task_index - 1).id;
            prof.stride = clamped_stride(budget, ctx.sim);
            int best_a = 0;
            std::optional<CandidateScore> best;
            std::vector<double> losses;
            int a = 0;
            while (true) {
                const CandidateScore s = oracle_replay(a, ctx);
                prof.profile.push_back({a, s});
                losses.push_back(s.loss);
                if (!best || better_candidate(s, *best, ctx.sim.objective)) {
                    best = s;
                    best_a = a;
                }
                if (a >= budget) break;
                a = std::min(a + prof.stride, budget);
            }
            prof.loss_unimodal = profile_unimodal(losses);
            profiles.push_back(std::move(prof));
            return {best_a, std::nullopt};
        }
        SwitchingPlan::Provenance provenance() const override {
            return SwitchingPlan::Provenance::Oracle;
        }
    };

    SweepPlanner planner;
    planner.targets = tasks_to_sweep;
    Mlp final_net;
    RunMetrics metrics =
        run_stream(stream, capacity, spec, sim, planner, run_seed, &updater, &final_net);

    // No boundary follows the last task, so its switching point changes
    // nothing: the profile is the final evaluation repeated across the grid.
    for (int t : tasks_to_sweep) {
        if (t != stream.size()) continue;
        SweepProfile prof;
        prof.task_id = stream.task(t - 1).id;
        const int budget = capacity / t;
        prof.stride = clamped_stride(budget, sim);
        const EvalResult r = evaluate_on_stream_task(final_net, stream, t - 1);
        int a = 0;
        while (true) {
            prof.profile.push_back({a, {r.mean_loss, r.accuracy}});
            if (a >= budget) break;
            a = std::min(a + prof.stride, budget);
        }
        prof.loss_unimodal = true;
        planner.profiles.push_back(std::move(prof));
    }
    return planner.profiles;
}

}  // namespace gpsim
