#pragma once

#include <functional>

#include "gpsim/pseudo.hpp"
#include "gpsim/trainer.hpp"

namespace gpsim {

// Settings for the pseudo-future simulation and the switching-point search.
struct SimConfig {
    enum class Objective { Accuracy, Loss };

    int window = 10;                  // pseudo-future tasks per simulation
    int pseudo_epochs = 1;            // epochs per pseudo task
    int examples_per_pseudo_task = 0; // 0 means buffer capacity
    int min_stride = 20;
    int max_stride = 100;
    SynthesisMethod synthesis = SynthesisMethod::Permutation;
    double rotation_step_degrees = 15.0;
    double blur_sigma_step = 0.5;
    int blur_kernel = 5;
    // Candidates compare by accuracy with loss as tie-break, or the reverse.
    Objective objective = Objective::Accuracy;
};

struct CandidateScore {
    double loss = 0.0;
    double accuracy = 0.0;
};

// True when a beats b under the objective.
bool better_candidate(const CandidateScore& a, const CandidateScore& b,
                      SimConfig::Objective objective);

struct SearchTrace {
    int task_id = 0;
    int upper = 0;   // staging budget b
    int stride = 0;  // clamped step epsilon
    std::map<int, CandidateScore> evaluated;
    int chosen = 0;
    int calls = 0;            // distinct evaluations requested
    bool fallback_used = false;  // no interior optimum emerged; best evaluated returned
    bool degenerate = false;     // upper < stride, single evaluation

    nlohmann::json to_json() const;
};

// Stride-robust bisection over the integer range [0, upper]: evaluates the
// midpoint and its stride-neighbors, discards the half that cannot hold the
// optimum, and stops when the bracket is narrower than the stride or an
// interior optimum emerges. Evaluations are memoized and capped at
// 2 * ceil(log2(upper / stride)) + 3; the returned point is always the best
// evaluated one (ties to the smallest). upper < stride degenerates to a
// single evaluation at upper.
SearchTrace bisect_search(int upper, int stride, SimConfig::Objective objective,
                          const std::function<CandidateScore(int)>& eval);

// Runs the pseudo-future simulation for one switching-point candidate:
// copies model and buffer, rebuilds the in-progress slot with the candidate
// ring size, trains the pseudo sequence (each pseudo slot fills by uniform
// random selection), and scores the current task's test split under the
// simulated final parameters.
CandidateScore global_sim(int candidate, const std::vector<Task>& pseudo_seq,
                          const TaskStream& stream, int task_index, const Mlp& net,
                          const MemoryBuffer& buffer, const SwitchingPlan& plan,
                          const LocalUpdateSpec& spec, const SimConfig& sim,
                          LocalUpdater& updater, uint64_t sim_seed);

// Everything a planner may consult when choosing the switching point after
// task_index (1-based) finished training.
struct PlanContext {
    const TaskStream& stream;
    int task_index;
    const Mlp& net;
    const MemoryBuffer& buffer;
    const SwitchingPlan& plan;
    const LocalUpdateSpec& spec;
    const SimConfig& sim;
    uint64_t run_seed;
    LocalUpdater& updater;
};

struct PlanDecision {
    int a = 0;
    std::optional<SearchTrace> trace;
};

class SwitchPlanner {
public:
    virtual ~SwitchPlanner() = default;
    virtual PlanDecision choose(const PlanContext& ctx) = 0;
    virtual SwitchingPlan::Provenance provenance() const = 0;
};

// Fixed rule per policy: reservoir-style methods take 0, ring-style methods
// the whole slot, hybrid follows the buffer's scarcity switch.
class StaticPlanner final : public SwitchPlanner {
public:
    PlanDecision choose(const PlanContext& ctx) override;
    SwitchingPlan::Provenance provenance() const override {
        return SwitchingPlan::Provenance::Static;
    }
};

// Replays a switching plan supplied up front.
class FixedPlanPlanner final : public SwitchPlanner {
public:
    explicit FixedPlanPlanner(std::map<int, int> points) : points_(std::move(points)) {}
    PlanDecision choose(const PlanContext& ctx) override;
    SwitchingPlan::Provenance provenance() const override {
        return SwitchingPlan::Provenance::Static;
    }

private:
    std::map<int, int> points_;
};

// Online search: synthesizes min(window, T - i) pseudo-future tasks from the
// current task and bisects the switching point against simulated outcomes.
class GpsPlanner final : public SwitchPlanner {
public:
    PlanDecision choose(const PlanContext& ctx) override;
    SwitchingPlan::Provenance provenance() const override {
        return SwitchingPlan::Provenance::Simulated;
    }
};

// Offline reference: candidates are scored by replaying the real remainder of
// the stream (future slots fill by uniform random selection) and measuring
// the current task's test outcome under the final parameters.
class OraclePlanner final : public SwitchPlanner {
public:
    PlanDecision choose(const PlanContext& ctx) override;
    SwitchingPlan::Provenance provenance() const override {
        return SwitchingPlan::Provenance::Oracle;
    }
};

struct RunMetrics {
    // acc_matrix(i, j): test accuracy of task j+1 after training task i+1;
    // strictly lower-triangular entries only (j <= i).
    Eigen::MatrixXd acc_matrix;
    std::vector<double> final_task_accuracy;
    double average_accuracy = 0.0;
    std::vector<double> per_task_loss;  // test loss under final parameters
    double global_loss_total = 0.0;
    SwitchingPlan plan;
    std::vector<SearchTrace> traces;
    bool hybrid_switched = false;

    nlohmann::json to_json() const;
};

// Trains the whole stream with the given staging policy and planner. All
// randomness fans out from run_seed ("init", "task" i, "shrink" i, "sim" i,
// "synthesize" i). final_net, when given, receives the trained parameters.
RunMetrics run_stream(const TaskStream& stream, int capacity, const LocalUpdateSpec& spec,
                      const SimConfig& sim, SwitchPlanner& planner, uint64_t run_seed,
                      LocalUpdater* updater = nullptr, Mlp* final_net = nullptr);

// Sum and per-task breakdown of test losses under the given parameters.
std::pair<double, std::vector<double>> global_loss(const Mlp& net, const TaskStream& stream);

// Exhaustive switching-point profile at one task: runs the stream up to the
// task, then scores every grid candidate {0, stride, 2*stride, ..., b} by
// oracle-style replay. The run continues with the grid best, so consecutive
// sweeps compose.
struct SweepProfile {
    int task_id = 0;
    int stride = 0;
    std::vector<std::pair<int, CandidateScore>> profile;
    bool loss_unimodal = false;

    nlohmann::json to_json() const;
};

std::vector<SweepProfile> sweep_switching_points(const TaskStream& stream, int capacity,
                                                 const LocalUpdateSpec& spec,
                                                 const SimConfig& sim,
                                                 const std::vector<int>& tasks_to_sweep,
                                                 uint64_t run_seed);

// True when the loss sequence is unimodal: after dropping zero differences,
// the sign pattern of consecutive differences is falls-then-rises.
bool profile_unimodal(const std::vector<double>& losses);

}  // namespace gpsim
