#pragma once

#include "gpsim/memory.hpp"

namespace gpsim {

// One task's training pass: joint SGD on the task batch plus a replayed
// memory batch, weighted task-mean + lambda * memory-mean, while the staging
// policy watches the example stream.
struct LocalUpdateSpec {
    TrainConfig train;
    FillPolicy policy = FillPolicy::Mixed;
    double gamma = 0.2;          // curriculum easy-pool fraction
    bool record_losses = false;  // keep per-step loss decomposition
};

struct StepLoss {
    double task_loss = 0.0;
    double memory_loss = 0.0;
    double combined = 0.0;
};

struct LocalUpdateStats {
    int steps = 0;
    double final_epoch_loss = 0.0;       // mean combined loss over the last epoch
    std::vector<StepLoss> losses;        // per step, when record_losses
};

// Pluggable update rule: the engine drives simulations and searches through
// this interface, so alternative rules slot in without touching the search.
class LocalUpdater {
public:
    virtual ~LocalUpdater() = default;
    virtual LocalUpdateStats update(Mlp& net, const Task& task, MemoryBuffer& buffer,
                                    const LocalUpdateSpec& spec, uint64_t seed) = 0;
};

class ReplayUpdater final : public LocalUpdater {
public:
    LocalUpdateStats update(Mlp& net, const Task& task, MemoryBuffer& buffer,
                            const LocalUpdateSpec& spec, uint64_t seed) override;
};

// Convenience wrapper over a ReplayUpdater. Opens the staging area (budget
// capacity / task ordinal), trains spec.train.epochs epochs, seals staging.
// Randomness fans out from seed into disjoint "shuffle", "memory", "policy"
// and "pool" streams, so the parameter trajectory with lambda = 0 (or an
// empty buffer) is bit-identical to plain single-task SGD.
LocalUpdateStats local_update(Mlp& net, const Task& task, MemoryBuffer& buffer,
                              const LocalUpdateSpec& spec, uint64_t seed);

// Easy-pool construction from per-example statistics: overall size
// floor(gamma * N) by curriculum rank; per-class lists of size
// floor(gamma * N / C) from the same ranking.
EasyPool build_easy_pool(const std::vector<CurriculumStat>& stats, const Task& task, double gamma);

// Seeded random pool used before the first epoch's statistics exist.
EasyPool random_easy_pool(const Task& task, double gamma, Rng& rng);

}  // namespace gpsim
