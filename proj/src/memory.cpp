#include "gpsim/memory.hpp"

#include <algorithm>
#include <cmath>

namespace gpsim {

bool is_curriculum(FillPolicy p) {
    return p == FillPolicy::CurRes || p == FillPolicy::CurRingFull || p == FillPolicy::CurMixed;
}

const char* fill_policy_name(FillPolicy p) {
    switch (p) {
        case FillPolicy::Reservoir: return "reservoir";
        case FillPolicy::RingFull: return "ring-full";
        case FillPolicy::Hybrid: return "hybrid";
        case FillPolicy::Mixed: return "mixed";
        case FillPolicy::CurRes: return "cur-res";
        case FillPolicy::CurRingFull: return "cur-ring-full";
        case FillPolicy::CurMixed: return "cur-mixed";
    }
    return "unknown";
}

int TaskSlot::ring_size() const {
    int n = 0;
    for (const auto& [c, q] : ring_part) n += static_cast<int>(q.size());
    return n;
}

std::vector<int> implicit_curriculum_rank(std::vector<CurriculumStat> stats) {
    std::stable_sort(stats.begin(), stats.end(), [](const CurriculumStat& a, const CurriculumStat& b) {
        if (a.learned_epoch != b.learned_epoch) return a.learned_epoch < b.learned_epoch;
        return a.loss < b.loss;
    });
    std::vector<int> out;
    out.reserve(stats.size());
    for (const auto& s : stats) out.push_back(s.source_index);
    return out;
}

nlohmann::json SwitchingPlan::to_json() const {
    nlohmann::json pts = nlohmann::json::object();
    for (const auto& [task, a] : points) pts[std::to_string(task)] = a;
    const char* prov = provenance == Provenance::Static ? "static"
                       : provenance == Provenance::Simulated ? "simulated"
                                                             : "oracle";
    return {{"provenance", prov}, {"points", pts}};
}

SwitchingPlan SwitchingPlan::from_json(const nlohmann::json& j) {
    SwitchingPlan plan;
    const std::string prov = j.at("provenance").get<std::string>();
    if (prov == "static") plan.provenance = Provenance::Static;
    else if (prov == "simulated") plan.provenance = Provenance::Simulated;
    else if (prov == "oracle") plan.provenance = Provenance::Oracle;
    else throw ConfigError("unknown plan provenance '" + prov + "'");
    for (const auto& [key, value] : j.at("points").items()) {
        plan.points[std::stoi(key)] = value.get<int>();
    }
    return plan;
}

std::vector<int> equal_allocation(int capacity, int count) {
    if (count < 1) throw ContractError("equal_allocation needs count >= 1");
    std::vector<int> alloc(static_cast<size_t>(count), capacity / count);
    for (int j = 0; j < capacity % count; ++j) alloc[static_cast<size_t>(j)] += 1;
    return alloc;
}

std::map<int, int> ring_class_caps(int budget, const std::vector<int>& class_ids) {
    if (class_ids.empty()) throw ContractError("ring caps need at least one class");
    std::map<int, int> caps;
    const int n = static_cast<int>(class_ids.size());
    for (int j = 0; j < n; ++j) {
        caps[class_ids[static_cast<size_t>(j)]] = budget / n + (j < budget % n ? 1 : 0);
    }
    return caps;
}

MemoryBuffer::MemoryBuffer(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw ConfigError("buffer capacity must be >= 1, got " + std::to_string(capacity));
}

int MemoryBuffer::finalized_total() const {
    int n = 0;
    for (const auto& [id, slot] : slots_) n += slot.size();
    return n;
}

int MemoryBuffer::staging_total() const {
    if (!staging_) return 0;
    int n = static_cast<int>(staging_->res.size());
    for (const auto& [c, q] : staging_->ring) n += static_cast<int>(q.size());
    return n;
}

int MemoryBuffer::staging_task_id() const {
    if (!staging_) throw ContractError("no staging area open");
    return staging_->task_id;
}

void MemoryBuffer::begin_task(const Task& task, int staging_budget, FillPolicy policy,
                              uint64_t policy_seed) {
    if (staging_) {
        throw ContractError("staging for task " + std::to_string(staging_->task_id) +
                            " still open; rebuild before beginning task " + std::to_string(task.id));
    }
    if (slots_.count(task.id)) {
        throw ContractError("task " + std::to_string(task.id) + " already has a slot");
    }
    if (staging_budget < 0) throw ContractError("staging budget must be >= 0");
    Staging s;
    s.task_id = task.id;
    s.budget = staging_budget;
    s.policy = policy;
    s.class_ids = task.class_ids;
    s.rng = Rng(policy_seed);
    staging_ = std::move(s);
}

void MemoryBuffer::require_staging(const Task& task) const {
    if (!staging_) throw ContractError("no staging area open");
    if (staging_->sealed) throw ContractError("staging already sealed");
    if (staging_->task_id != task.id) {
        throw ContractError("staging belongs to task " + std::to_string(staging_->task_id) +
                            ", got examples from task " + std::to_string(task.id));
    }
}

void MemoryBuffer::note_added(const Example& e) { class_counts_[e.label] += 1; }

void MemoryBuffer::note_removed(const Example& e) {
    auto it = class_counts_.find(e.label);
    if (it == class_counts_.end() || it->second <= 0) {
        throw ContractError("class count bookkeeping underflow for class " +
                            std::to_string(e.label));
    }
    it->second -= 1;
    if (it->second == 1) hybrid_switched_ = true;  // scarcity: some class down to one example
    if (it->second == 0) class_counts_.erase(it);
}

void MemoryBuffer::res_admit_slotted(const Task& task, int k) {
    Staging& s = *staging_;
    if (s.budget == 0) return;
    if (s.res_sources.count(task.train_source(k))) {  // already held: refresh only
        s.seen += 1.0;
        return;
    }
    const auto n_after = static_cast<uint64_t>(s.seen) + 1;
    if (static_cast<int>(s.res.size()) < s.budget) {
        s.res.push_back(task.train_example(k));
        s.res_sources.insert(s.res.back().source_index);
        note_added(s.res.back());
    } else {
        const uint64_t r = s.rng.below(n_after);
        if (r < static_cast<uint64_t>(s.budget)) {
            note_removed(s.res[static_cast<size_t>(r)]);
            s.res_sources.erase(s.res[static_cast<size_t>(r)].source_index);
            s.res[static_cast<size_t>(r)] = task.train_example(k);
            s.res_sources.insert(s.res[static_cast<size_t>(r)].source_index);
            note_added(s.res[static_cast<size_t>(r)]);
        }
    }
    s.seen += 1.0;
}

void MemoryBuffer::res_admit_prob(const Task& task, int k, double advance, double prob_scale) {
    Staging& s = *staging_;
    if (s.budget == 0) return;
    s.seen += advance;
    if (s.res_sources.count(task.train_source(k))) return;  // already held: refresh only
    const double p = static_cast<double>(s.budget) / (prob_scale * s.seen);
    if (p < 1.0 && s.rng.uniform() >= p) return;
    if (static_cast<int>(s.res.size()) < s.budget) {
        s.res.push_back(task.train_example(k));
        s.res_sources.insert(s.res.back().source_index);
        note_added(s.res.back());
    } else {
        const int victim = s.rng.below_int(s.budget);
        note_removed(s.res[static_cast<size_t>(victim)]);
        s.res_sources.erase(s.res[static_cast<size_t>(victim)].source_index);
        s.res[static_cast<size_t>(victim)] = task.train_example(k);
        s.res_sources.insert(s.res[static_cast<size_t>(victim)].source_index);
        note_added(s.res[static_cast<size_t>(victim)]);
    }
}

void MemoryBuffer::ring_admit(const Task& task, int k) {
    Staging& s = *staging_;
    const int label = task.train_label(k);
    if (std::find(s.class_ids.begin(), s.class_ids.end(), label) == s.class_ids.end()) {
        throw ContractError("example with class " + std::to_string(label) +
                            " not declared by task " + std::to_string(task.id));
    }
    const auto caps = ring_class_caps(s.budget, s.class_ids);
    const int cap = caps.at(label);
    if (cap == 0) return;
    auto& q = s.ring[label];
    if (s.ring_sources.count(task.train_source(k))) {
        // Re-observation makes the example newest again instead of duplicating.
        const auto it = std::find_if(q.begin(), q.end(), [&](const Example& e) {
            return e.source_index == task.train_source(k);
        });
        if (it != q.end()) {
            Example fresh = std::move(*it);
            q.erase(it);
            q.push_back(std::move(fresh));
        }
        return;
    }
    q.push_back(task.train_example(k));
    s.ring_sources.insert(q.back().source_index);
    note_added(q.back());
    while (static_cast<int>(q.size()) > cap) {
        note_removed(q.front());
        s.ring_sources.erase(q.front().source_index);
        q.pop_front();
    }
}

void MemoryBuffer::convert_staging_to_ring() {
    Staging& s = *staging_;
    const auto caps = ring_class_caps(s.budget, s.class_ids);
    for (Example& e : s.res) {
        auto& q = s.ring[e.label];
        q.push_back(std::move(e));
        while (static_cast<int>(q.size()) > caps.at(q.back().label)) {
            note_removed(q.front());
            q.pop_front();
        }
    }
    s.res.clear();
    s.res_sources.clear();
    s.ring_sources.clear();
    for (const auto& [c, q] : s.ring) {
        for (const Example& e : q) s.ring_sources.insert(e.source_index);
    }
}

void MemoryBuffer::observe(const Task& task, std::span<const int> ks) {
    require_staging(task);
    switch (staging_->policy) {
        case FillPolicy::Reservoir: reservoir_update(*this, task, ks); break;
        case FillPolicy::RingFull: ring_full_update(*this, task, ks); break;
        case FillPolicy::Hybrid: hybrid_update(*this, task, ks); break;
        case FillPolicy::Mixed: mixed_update(*this, task, ks); break;
        default:
            throw ContractError("curriculum staging requires observe_curriculum");
    }
}

void MemoryBuffer::observe_curriculum(const Task& task, std::span<const int> ks, int epoch,
                                      int total_epochs, const EasyPool& pool) {
    require_staging(task);
    if (!is_curriculum(staging_->policy)) {
        throw ContractError("observe_curriculum requires a curriculum staging policy");
    }
    if (epoch < 1 || epoch > total_epochs) {
        throw ContractError("epoch " + std::to_string(epoch) + " outside [1, " +
                            std::to_string(total_epochs) + "]");
    }
    const bool early = epoch <= (total_epochs + 1) / 2;
    const double gamma = pool.gamma;
    if (gamma <= 0.0 || gamma > 1.0) {
        throw ContractError("easy-pool gamma must be in (0, 1], got " + std::to_string(gamma));
    }
    for (int k : ks) {
        const bool in_pool = pool.contains(task.train_source(k));
        const bool res_side =
            staging_->policy == FillPolicy::CurRes || staging_->policy == FillPolicy::CurMixed;
        const bool ring_side =
            staging_->policy == FillPolicy::CurRingFull || staging_->policy == FillPolicy::CurMixed;
        if (res_side) {
            if (early) {
                res_admit_prob(task, k, 1.0, 1.0);
            } else if (in_pool) {
                res_admit_prob(task, k, 1.0 / gamma, gamma);
            }
        }
        if (ring_side) {
            if (early || in_pool) ring_admit(task, k);
        }
    }
}

void MemoryBuffer::apply_curriculum_replacement(const Task& task, const EasyPool& pool) {
    require_staging(task);
    if (!is_curriculum(staging_->policy)) {
        throw ContractError("curriculum replacement requires a curriculum staging policy");
    }
    Staging& s = *staging_;

    std::set<int> staged;
    for (const Example& e : s.res) staged.insert(e.source_index);
    for (const auto& [c, q] : s.ring) {
        for (const Example& e : q) staged.insert(e.source_index);
    }

    // source index -> position in the task's train row list, for materializing
    // replacements.
    std::map<int, int> row_of;
    for (int k = 0; k < task.train_size(); ++k) row_of[task.train_source(k)] = k;

    auto draw_from = [&](const std::vector<int>& ranked) -> std::optional<int> {
        std::vector<int> candidates;
        for (int src : ranked) {
            if (!staged.count(src)) candidates.push_back(src);
        }
        if (candidates.empty()) return std::nullopt;
        return candidates[static_cast<size_t>(s.rng.below_int(static_cast<int>(candidates.size())))];
    };

    for (Example& e : s.res) {
        if (pool.contains(e.source_index)) continue;
        const auto src = draw_from(pool.ranked);
        if (!src) break;
        note_removed(e);
        staged.erase(e.source_index);
        s.res_sources.erase(e.source_index);
        e = task.train_example(row_of.at(*src));
        note_added(e);
        staged.insert(*src);
        s.res_sources.insert(*src);
    }
    for (auto& [c, q] : s.ring) {
        const auto it = pool.per_class.find(c);
        for (Example& e : q) {
            if (pool.contains(e.source_index)) continue;
            if (it == pool.per_class.end()) break;
            const auto src = draw_from(it->second);
            if (!src) break;
            note_removed(e);
            staged.erase(e.source_index);
            s.ring_sources.erase(e.source_index);
            e = task.train_example(row_of.at(*src));
            note_added(e);
            staged.insert(*src);
            s.ring_sources.insert(*src);
        }
    }
}

void MemoryBuffer::seal_staging() {
    if (!staging_) throw ContractError("no staging area to seal");
    staging_->sealed = true;
}

TaskSlot MemoryBuffer::finalize_staging(int ring_size) {
    Staging& s = *staging_;
    if (ring_size < 0 || ring_size > s.budget) {
        throw ContractError("switching point " + std::to_string(ring_size) + " outside [0, " +
                            std::to_string(s.budget) + "] for task " + std::to_string(s.task_id));
    }
    TaskSlot slot;
    slot.task_id = s.task_id;
    slot.ring_budget = ring_size;
    slot.res_budget = s.budget - ring_size;
    slot.class_ids = s.class_ids;

    // Recency side: trim the staged FIFOs to the chosen ring size.
    std::vector<Example> trimmed;
    slot.ring_part = s.ring;
    trim_ring(slot.ring_part, ring_size, &trimmed);
    std::set<int> picked;
    for (const auto& [c, q] : slot.ring_part) {
        for (const Example& e : q) picked.insert(e.source_index);
    }

    // Random side: reservoir picks not already kept by the recency side,
    // topped up from trimmed recency leftovers when the reservoir runs short.
    for (const Example& e : s.res) {
        if (static_cast<int>(slot.res_part.size()) >= slot.res_budget) break;
        if (picked.count(e.source_index)) continue;
        slot.res_part.push_back(e);
        picked.insert(e.source_index);
    }
    for (const Example& e : trimmed) {
        if (static_cast<int>(slot.res_part.size()) >= slot.res_budget) break;
        if (picked.count(e.source_index)) continue;
        slot.res_part.push_back(e);
        picked.insert(e.source_index);
    }

    // Anything staged but not kept is an eviction.
    for (const Example& e : s.res) {
        if (!picked.count(e.source_index)) note_removed(e);
    }
    for (const Example& e : trimmed) {
        if (!picked.count(e.source_index)) note_removed(e);
    }
    return slot;
}

void MemoryBuffer::trim_ring(std::map<int, std::deque<Example>>& ring, int budget,
                             std::vector<Example>* evicted) {
    if (ring.empty()) return;
    std::vector<int> classes;
    for (const auto& [c, q] : ring) classes.push_back(c);
    const auto caps = ring_class_caps(budget, classes);
    for (auto& [c, q] : ring) {
        const int cap = caps.at(c);
        while (static_cast<int>(q.size()) > cap) {
            if (evicted) evicted->push_back(std::move(q.front()));
            q.pop_front();
        }
    }
}

void MemoryBuffer::rebuild_for_new_task(int new_task_count, const SwitchingPlan& plan,
                                        uint64_t shrink_seed) {
    if (staging_ && !staging_->sealed) {
        throw ContractError("staging for task " + std::to_string(staging_->task_id) +
                            " must be sealed before rebuild");
    }
    const int slots_after = static_cast<int>(slots_.size()) + (staging_ ? 1 : 0);
    if (new_task_count != slots_after) {
        throw ContractError("rebuild_for_new_task(" + std::to_string(new_task_count) +
                            ") does not match " + std::to_string(slots_after) + " stored tasks");
    }
    for (const auto& [id, slot] : slots_) {
        if (!plan.points.count(id)) {
            throw ContractError("plan has no switching point for task " + std::to_string(id));
        }
    }
    if (staging_) {
        const int id = staging_->task_id;
        if (!plan.points.count(id)) {
            throw ContractError("plan has no switching point for task " + std::to_string(id));
        }
        TaskSlot slot = finalize_staging(plan.points.at(id));
        staging_.reset();
        slots_.emplace(slot.task_id, std::move(slot));
    }

    const std::vector<int> alloc = equal_allocation(capacity_, new_task_count);
    int ordinal = 0;
    for (auto& [id, slot] : slots_) {
        const int target = alloc[static_cast<size_t>(ordinal++)];
        int new_ring_budget = std::min(slot.ring_budget, target);
        int new_res_budget = target - new_ring_budget;

        if (slot.res_size() > new_res_budget) {
            // Seeded-uniform eviction among reservoir residents, order kept.
            Rng rng(seed_for(shrink_seed, "slot-shrink", id));
            const int keep = new_res_budget;
            std::vector<int> keep_idx =
                rng.sample_without_replacement(slot.res_size(), keep);
            std::sort(keep_idx.begin(), keep_idx.end());
            std::vector<Example> kept;
            kept.reserve(static_cast<size_t>(keep));
            size_t next = 0;
            for (int i = 0; i < slot.res_size(); ++i) {
                if (next < keep_idx.size() && keep_idx[next] == i) {
                    kept.push_back(std::move(slot.res_part[static_cast<size_t>(i)]));
                    ++next;
                } else {
                    note_removed(slot.res_part[static_cast<size_t>(i)]);
                }
            }
            slot.res_part = std::move(kept);
        }
        if (slot.ring_size() > new_ring_budget ||
            (new_ring_budget < slot.ring_budget && !slot.ring_part.empty())) {
            std::vector<Example> evicted;
            trim_ring(slot.ring_part, new_ring_budget, &evicted);
            for (const Example& e : evicted) note_removed(e);
        }
        slot.res_budget = new_res_budget;
        slot.ring_budget = new_ring_budget;
    }
    flat_valid_ = false;

    if (finalized_total() > capacity_) {
        throw ContractError("buffer holds " + std::to_string(finalized_total()) +
                            " examples, capacity " + std::to_string(capacity_));
    }
}

std::optional<Batch> MemoryBuffer::sample_batch(int batch_size, Rng& rng) const {
    if (!flat_valid_) {
        flat_.clear();
        for (const auto& [id, slot] : slots_) {
            for (size_t i = 0; i < slot.res_part.size(); ++i) {
                flat_.push_back({id, 'r', 0, static_cast<int>(i)});
            }
            for (const auto& [c, q] : slot.ring_part) {
                for (size_t i = 0; i < q.size(); ++i) {
                    flat_.push_back({id, 'g', c, static_cast<int>(i)});
                }
            }
        }
        flat_valid_ = true;
    }
    if (flat_.empty()) return std::nullopt;
    if (batch_size < 1) throw ContractError("memory batch size must be >= 1");

    Batch batch;
    batch.task_ids.resize(static_cast<size_t>(batch_size));
    batch.y.resize(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        const Ref& ref = flat_[static_cast<size_t>(rng.below(flat_.size()))];
        const TaskSlot& slot = slots_.at(ref.task_id);
        const Example& e = ref.part == 'r'
                               ? slot.res_part[static_cast<size_t>(ref.pos)]
                               : slot.ring_part.at(ref.class_id)[static_cast<size_t>(ref.pos)];
        if (i == 0) batch.x.resize(batch_size, e.x.size());
        batch.x.row(i) = e.x.transpose();
        batch.y(i) = e.label;
        batch.task_ids[static_cast<size_t>(i)] = e.task_id;
    }
    return batch;
}

std::vector<MemoryBuffer::Entry> MemoryBuffer::entries(bool include_staging) const {
    std::vector<Entry> out;
    for (const auto& [id, slot] : slots_) {
        for (const Example& e : slot.res_part) out.push_back({id, 'r', e.label, e.source_index});
        for (const auto& [c, q] : slot.ring_part) {
            for (const Example& e : q) out.push_back({id, 'g', c, e.source_index});
        }
    }
    if (include_staging && staging_) {
        for (const Example& e : staging_->res) {
            out.push_back({staging_->task_id, 'r', e.label, e.source_index});
        }
        for (const auto& [c, q] : staging_->ring) {
            for (const Example& e : q) out.push_back({staging_->task_id, 'g', c, e.source_index});
        }
    }
    return out;
}

bool MemoryBuffer::Entry::operator<(const Entry& o) const {
    return std::tie(task_id, part, class_id, source_index) <
           std::tie(o.task_id, o.part, o.class_id, o.source_index);
}

nlohmann::json MemoryBuffer::snapshot() const {
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& [id, slot] : slots_) {
        nlohmann::json ring = nlohmann::json::object();
        for (const auto& [c, q] : slot.ring_part) {
            nlohmann::json sources = nlohmann::json::array();
            for (const Example& e : q) sources.push_back(e.source_index);
            ring[std::to_string(c)] = sources;
        }
        nlohmann::json res = nlohmann::json::array();
        for (const Example& e : slot.res_part) {
            res.push_back({{"class_id", e.label}, {"source_index", e.source_index}});
        }
        slots.push_back({{"task_id", id},
                         {"res_budget", slot.res_budget},
                         {"ring_budget", slot.ring_budget},
                         {"res", res},
                         {"ring", ring}});
    }
    return {{"capacity", capacity_},
            {"hybrid_switched", hybrid_switched_},
            {"staging_open", staging_.has_value()},
            {"slots", slots}};
}

void reservoir_update(MemoryBuffer& b, const Task& task, std::span<const int> ks) {
    b.require_staging(task);
    for (int k : ks) b.res_admit_slotted(task, k);
}

void ring_full_update(MemoryBuffer& b, const Task& task, std::span<const int> ks) {
    b.require_staging(task);
    for (int k : ks) b.ring_admit(task, k);
}

void hybrid_update(MemoryBuffer& b, const Task& task, std::span<const int> ks) {
    b.require_staging(task);
    for (int k : ks) {
        if (b.hybrid_switched_) {
            b.ring_admit(task, k);
        } else {
            b.res_admit_slotted(task, k);
            if (b.hybrid_switched_) b.convert_staging_to_ring();
        }
    }
}

void mixed_update(MemoryBuffer& b, const Task& task, std::span<const int> ks) {
    b.require_staging(task);
    for (int k : ks) {
        b.res_admit_slotted(task, k);
        b.ring_admit(task, k);
    }
}

void cur_res_update(MemoryBuffer& b, const Task& task, std::span<const int> ks, int epoch,
                    int total_epochs, const EasyPool& pool) {
    b.observe_curriculum(task, ks, epoch, total_epochs, pool);
}

void cur_ring_full_update(MemoryBuffer& b, const Task& task, std::span<const int> ks, int epoch,
                          int total_epochs, const EasyPool& pool) {
    b.observe_curriculum(task, ks, epoch, total_epochs, pool);
}

void verify_buffer_invariants(const MemoryBuffer& buffer, int tasks_done) {
    const auto& slots = buffer.slots();

    // 1. Disjointness within and across slots.
    std::set<std::pair<int, int>> seen;
    for (const auto& entry : buffer.entries()) {
        if (!seen.insert({entry.task_id, entry.source_index}).second) {
            throw ContractError("duplicate stored example: task " + std::to_string(entry.task_id) +
                                ", source " + std::to_string(entry.source_index));
        }
    }

    // 2. Slots hold only their own task's examples.
    for (const auto& [id, slot] : slots) {
        for (const Example& e : slot.res_part) {
            if (e.task_id != id) {
                throw ContractError("slot " + std::to_string(id) + " holds example from task " +
                                    std::to_string(e.task_id));
            }
        }
        for (const auto& [c, q] : slot.ring_part) {
            for (const Example& e : q) {
                if (e.task_id != id) {
                    throw ContractError("slot " + std::to_string(id) +
                                        " holds example from task " + std::to_string(e.task_id));
                }
                if (e.label != c) {
                    throw ContractError("slot " + std::to_string(id) + " class FIFO " +
                                        std::to_string(c) + " holds class " +
                                        std::to_string(e.label));
                }
            }
        }
    }

    // 3. Capacity.
    if (buffer.finalized_total() > buffer.capacity()) {
        throw ContractError("stored " + std::to_string(buffer.finalized_total()) +
                            " examples, capacity " + std::to_string(buffer.capacity()));
    }

    // 4. Equal allocation over task ordinals.
    if (tasks_done > 0) {
        if (static_cast<int>(slots.size()) != tasks_done) {
            throw ContractError("expected " + std::to_string(tasks_done) + " slots, found " +
                                std::to_string(slots.size()));
        }
        const auto alloc = equal_allocation(buffer.capacity(), tasks_done);
        int ordinal = 0;
        for (const auto& [id, slot] : slots) {
            if (slot.slot_budget() != alloc[static_cast<size_t>(ordinal)]) {
                throw ContractError("slot " + std::to_string(id) + " budget " +
                                    std::to_string(slot.slot_budget()) + ", expected " +
                                    std::to_string(alloc[static_cast<size_t>(ordinal)]));
            }
            ++ordinal;
        }
    }

    // 5. Part sizes within budgets; ring class counts within caps, caps within
    // one of each other.
    for (const auto& [id, slot] : slots) {
        if (slot.res_size() > slot.res_budget) {
            throw ContractError("slot " + std::to_string(id) + " reservoir overflows budget");
        }
        if (slot.ring_part.empty()) continue;
        std::vector<int> classes;
        for (const auto& [c, q] : slot.ring_part) classes.push_back(c);
        const auto caps = ring_class_caps(slot.ring_budget, classes);
        int cap_min = INT32_MAX, cap_max = 0;
        for (const auto& [c, cap] : caps) {
            cap_min = std::min(cap_min, cap);
            cap_max = std::max(cap_max, cap);
            const auto it = slot.ring_part.find(c);
            const int count = it == slot.ring_part.end() ? 0 : static_cast<int>(it->second.size());
            if (count > cap) {
                throw ContractError("slot " + std::to_string(id) + " class " + std::to_string(c) +
                                    " holds " + std::to_string(count) + " > cap " +
                                    std::to_string(cap));
            }
        }
        if (cap_max - cap_min > 1) {
            throw ContractError("slot " + std::to_string(id) + " ring caps unbalanced");
        }
    }
}

}  // namespace gpsim
