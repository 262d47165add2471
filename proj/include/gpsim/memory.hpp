#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <unordered_set>

#include "nlohmann/json.hpp"

#include "gpsim/tasks.hpp"

namespace gpsim {

// How the in-progress task's staging area admits examples.
//  Reservoir    — uniform reservoir only (pure random selection per task)
//  RingFull     — per-class FIFOs only (recency, class-balanced)
//  Hybrid       — reservoir until the scarcity switch fires, FIFOs afterwards
//  Mixed        — both structures in parallel, so any split can be realized
//                 at the task boundary (used by plan-driven construction)
//  CurRes/CurRingFull/CurMixed — curriculum-gated variants of the above
enum class FillPolicy {
    Reservoir,
    RingFull,
    Hybrid,
    Mixed,
    CurRes,
    CurRingFull,
    CurMixed,
};

bool is_curriculum(FillPolicy p);
const char* fill_policy_name(FillPolicy p);

// Finalized per-task storage: a recency part (per-class FIFOs, newest at the
// back) and a random part (reservoir picks). ring_budget is the switching
// point a_j chosen for this task; res_budget the remainder of the slot.
struct TaskSlot {
    int task_id = 0;
    int res_budget = 0;
    int ring_budget = 0;
    std::vector<int> class_ids;  // classes the task declared
    std::vector<Example> res_part;
    std::map<int, std::deque<Example>> ring_part;

    int slot_budget() const { return res_budget + ring_budget; }
    int res_size() const { return static_cast<int>(res_part.size()); }
    int ring_size() const;
    int size() const { return res_size() + ring_size(); }
};

// Ranked "easy first" view of a task's examples, produced by the trainer's
// per-epoch statistics. members indexes by source_index.
struct EasyPool {
    double gamma = 1.0;  // configured pool fraction; drives admission odds
    std::vector<int> ranked;  // source indices, easiest first
    std::unordered_set<int> members;
    std::map<int, std::vector<int>> per_class;  // class id -> ranked source indices

    bool contains(int source_index) const { return members.count(source_index) > 0; }
};

// Per-example learning statistics feeding the implicit curriculum.
struct CurriculumStat {
    int source_index = 0;
    double learned_epoch = 0.0;  // +inf when never stably learned
    double loss = 0.0;
};

// Ranks source indices by (learned_epoch ascending, loss ascending); ties
// beyond that keep input order.
std::vector<int> implicit_curriculum_rank(std::vector<CurriculumStat> stats);

// Switching points per task id plus where they came from.
struct SwitchingPlan {
    enum class Provenance { Static, Simulated, Oracle };
    std::map<int, int> points;
    Provenance provenance = Provenance::Static;

    nlohmann::json to_json() const;
    static SwitchingPlan from_json(const nlohmann::json& j);
};

// Replay buffer with per-task slots and a dual staging area for the
// in-progress task. Invariants, checked by verify_buffer_invariants:
//   1. slots are disjoint by (task_id, source_index) and their union is the
//      buffer content;
//   2. no slot holds examples from tasks newer than its own;
//   3. total stored never exceeds capacity;
//   4. after rebuild_for_new_task(i), every slot budget is |M|/i rounded,
//      remainder going to the lowest task ids;
//   5. ring parts keep per-class counts within one of each other.
class MemoryBuffer {
public:
    explicit MemoryBuffer(int capacity);

    int capacity() const { return capacity_; }
    const std::map<int, TaskSlot>& slots() const { return slots_; }
    bool hybrid_switched() const { return hybrid_switched_; }
    int finalized_total() const;
    int staging_total() const;

    // Opens the staging area for one task. staging_budget is |M| / task
    // ordinal; policy_seed feeds every random decision the staging makes.
    void begin_task(const Task& task, int staging_budget, FillPolicy policy, uint64_t policy_seed);
    bool staging_open() const { return staging_.has_value(); }
    int staging_task_id() const;

    // Per-batch admission for the non-curriculum policies; ks are train
    // indices into the staged task.
    void observe(const Task& task, std::span<const int> ks);

    // Curriculum admission: epoch is 1-based, pool is the current easy pool
    // (ignored during the first ceil(epochs/2) epochs).
    void observe_curriculum(const Task& task, std::span<const int> ks, int epoch, int total_epochs,
                            const EasyPool& pool);

    // End-of-task curriculum step: staged examples outside the pool are
    // replaced by unstaged pool members.
    void apply_curriculum_replacement(const Task& task, const EasyPool& pool);

    void seal_staging();

    // Task-boundary reconstruction: finalizes the sealed staging with ring
    // size plan[staged task], then shrinks every slot to the equal-allocation
    // budget for new_task_count tasks (reservoir parts shrink first, by
    // seeded-uniform eviction; ring parts evict oldest per class, keeping
    // class counts balanced). The plan must name every slot.
    void rebuild_for_new_task(int new_task_count, const SwitchingPlan& plan, uint64_t shrink_seed);

    // Uniform-with-replacement sample over finalized slots; nullopt when the
    // buffer holds no finalized examples.
    std::optional<Batch> sample_batch(int batch_size, Rng& rng) const;
    bool replay_available() const { return finalized_total() > 0; }

    nlohmann::json snapshot() const;

    // Content listing for tests: (task_id, part, class_id, source_index).
    struct Entry {
        int task_id;
        char part;  // 'r' reservoir, 'g' ring
        int class_id;
        int source_index;
        bool operator<(const Entry& o) const;
        bool operator==(const Entry& o) const = default;
    };
    std::vector<Entry> entries(bool include_staging = false) const;

private:
    friend void reservoir_update(MemoryBuffer&, const Task&, std::span<const int>);
    friend void ring_full_update(MemoryBuffer&, const Task&, std::span<const int>);
    friend void hybrid_update(MemoryBuffer&, const Task&, std::span<const int>);
    friend void mixed_update(MemoryBuffer&, const Task&, std::span<const int>);

    struct Staging {
        int task_id = 0;
        int budget = 0;
        FillPolicy policy = FillPolicy::Mixed;
        std::vector<int> class_ids;
        std::vector<Example> res;
        double seen = 0.0;  // curriculum admission advances this by 1/gamma
        std::map<int, std::deque<Example>> ring;
        // Multi-epoch local updates re-observe every example; these track what
        // each part already holds so re-observation refreshes instead of
        // storing a second copy of the same source.
        std::unordered_set<int> res_sources;
        std::unordered_set<int> ring_sources;
        bool sealed = false;
        Rng rng{0};
    };

    void require_staging(const Task& task) const;
    void res_admit_slotted(const Task& task, int k);   // classic reservoir step
    void res_admit_prob(const Task& task, int k, double advance, double prob_scale);
    void ring_admit(const Task& task, int k);
    void convert_staging_to_ring();
    void note_removed(const Example& e);
    void note_added(const Example& e);
    void maybe_trigger_hybrid_switch();
    TaskSlot finalize_staging(int ring_size);
    static void trim_ring(std::map<int, std::deque<Example>>& ring, int budget,
                          std::vector<Example>* evicted);

    int capacity_ = 0;
    std::map<int, TaskSlot> slots_;
    std::optional<Staging> staging_;
    bool hybrid_switched_ = false;
    std::map<int, int> class_counts_;  // over finalized + staging content

    // Copy-safe flat index over finalized content for O(1) uniform sampling;
    // rebuilt lazily, invalidated when slots change.
    struct Ref {
        int task_id;
        char part;
        int class_id;
        int pos;
    };
    mutable std::vector<Ref> flat_;
    mutable bool flat_valid_ = false;
};

// Equal allocation of capacity over task ordinals 1..count: base floor +1 for
// the first capacity % count slots (lowest task ids).
std::vector<int> equal_allocation(int capacity, int count);

// Per-class caps for a ring part: budget split over the listed classes,
// remainder to the lowest class ids.
std::map<int, int> ring_class_caps(int budget, const std::vector<int>& class_ids);

// Spec'd policy entry points; all operate on the open staging area.
void reservoir_update(MemoryBuffer& buffer, const Task& task, std::span<const int> ks);
void ring_full_update(MemoryBuffer& buffer, const Task& task, std::span<const int> ks);
void hybrid_update(MemoryBuffer& buffer, const Task& task, std::span<const int> ks);
void mixed_update(MemoryBuffer& buffer, const Task& task, std::span<const int> ks);
void cur_res_update(MemoryBuffer& buffer, const Task& task, std::span<const int> ks, int epoch,
                    int total_epochs, const EasyPool& pool);
void cur_ring_full_update(MemoryBuffer& buffer, const Task& task, std::span<const int> ks,
                          int epoch, int total_epochs, const EasyPool& pool);

// Throws ContractError naming the violated invariant. tasks_done is the
// number of finalized slots expected (0 allows any prefix state).
void verify_buffer_invariants(const MemoryBuffer& buffer, int tasks_done = 0);

}  // namespace gpsim
