#include "gpsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpsim {

namespace {

std::map<int, int> class_of_sources(const Task& task) {
    std::map<int, int> out;
    for (int k = 0; k < task.train_size(); ++k) out[task.train_source(k)] = task.train_label(k);
    return out;
}

EasyPool pool_from_ranked(const std::vector<int>& ranked_sources, const Task& task, double gamma) {
    if (gamma <= 0.0 || gamma > 1.0) {
        throw ConfigError("curriculum gamma must be in (0, 1], got " + std::to_string(gamma));
    }
    const auto classes = class_of_sources(task);
    const int n = task.train_size();
    const int c = static_cast<int>(task.class_ids.size());
    const int overall = static_cast<int>(std::floor(gamma * n));
    const int per_class = static_cast<int>(std::floor(gamma * n / std::max(1, c)));

    EasyPool pool;
    pool.gamma = gamma;
    for (int src : ranked_sources) {
        if (static_cast<int>(pool.ranked.size()) >= overall) break;
        pool.ranked.push_back(src);
        pool.members.insert(src);
    }
    for (int src : ranked_sources) {
        auto& lst = pool.per_class[classes.at(src)];
        if (static_cast<int>(lst.size()) < per_class) lst.push_back(src);
    }
    return pool;
}

// Per-example loss and correctness over the task's train split, chunked.
void scan_train_split(const Mlp& net, const Task& task, std::vector<double>& loss,
                      std::vector<bool>& correct) {
    const int n = task.train_size();
    loss.assign(static_cast<size_t>(n), 0.0);
    correct.assign(static_cast<size_t>(n), false);
    constexpr int kChunk = 1024;
    for (int start = 0; start < n; start += kChunk) {
        const int end = std::min(n, start + kChunk);
        std::vector<int> ks;
        for (int k = start; k < end; ++k) ks.push_back(k);
        const Eigen::MatrixXd x = task.gather_train(ks);
        const Eigen::VectorXi y = task.gather_train_labels(ks);
        const Eigen::MatrixXd logits = forward(net, x);
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            const double m = logits.row(i).maxCoeff();
            const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
            loss[static_cast<size_t>(start + i)] = lse - logits(i, y(i));
            int best = 0;
            for (int cidx = 1; cidx < logits.cols(); ++cidx) {
                if (logits(i, cidx) > logits(i, best)) best = cidx;
            }
            correct[static_cast<size_t>(start + i)] = best == y(i);
        }
    }
}

}  // namespace

EasyPool build_easy_pool(const std::vector<CurriculumStat>& stats, const Task& task,
                         double gamma) {
    return pool_from_ranked(implicit_curriculum_rank(stats), task, gamma);
}

EasyPool random_easy_pool(const Task& task, double gamma, Rng& rng) {
    std::vector<int> order = rng.sample_without_replacement(task.train_size(), task.train_size());
    std::vector<int> sources;
    sources.reserve(order.size());
    for (int k : order) sources.push_back(task.train_source(k));
    return pool_from_ranked(sources, task, gamma);
}

LocalUpdateStats ReplayUpdater::update(Mlp& net, const Task& task, MemoryBuffer& buffer,
                                       const LocalUpdateSpec& spec, uint64_t seed) {
    const TrainConfig& cfg = spec.train;
    if (cfg.epochs < 1) throw ConfigError("local update needs epochs >= 1");
    if (cfg.lambda < 0.0) throw ConfigError("lambda must be >= 0");

    const int ordinal = static_cast<int>(buffer.slots().size()) + 1;
    const int staging_budget = buffer.capacity() / ordinal;
    buffer.begin_task(task, staging_budget, spec.policy, seed_for(seed, "policy"));

    const bool curriculum = is_curriculum(spec.policy);
    EasyPool pool;
    std::vector<int> correct_since;
    if (curriculum) {
        if (static_cast<double>(spec.gamma) * task.train_size() < staging_budget) {
            throw ConfigError("easy pool gamma*|D| = " +
                              std::to_string(spec.gamma * task.train_size()) +
                              " smaller than slot budget " + std::to_string(staging_budget));
        }
        Rng pool_rng(seed_for(seed, "pool"));
        pool = random_easy_pool(task, spec.gamma, pool_rng);
        correct_since.assign(static_cast<size_t>(task.train_size()), -1);
    }

    Rng shuffle_rng(seed_for(seed, "shuffle"));
    Rng memory_rng(seed_for(seed, "memory"));

    LocalUpdateStats stats;
    Eigen::VectorXd row_losses;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        int epoch_steps = 0;
        for (const auto& ks : epoch_batches(task.train_size(), cfg.batch_size, shuffle_rng)) {
            const Eigen::MatrixXd xt = task.gather_train(ks);
            const Eigen::VectorXi yt = task.gather_train_labels(ks);
            const int bt = static_cast<int>(xt.rows());

            std::optional<Batch> mem;
            if (buffer.replay_available()) {
                mem = buffer.sample_batch(cfg.batch_size, memory_rng);
            }

            StepLoss step;
            if (mem && cfg.lambda > 0.0) {
                const int bm = mem->rows();
                Eigen::MatrixXd x(bt + bm, xt.cols());
                x.topRows(bt) = xt;
                x.bottomRows(bm) = mem->x;
                Eigen::VectorXi y(bt + bm);
                y.head(bt) = yt;
                y.tail(bm) = mem->y;
                Eigen::VectorXd w(bt + bm);
                w.head(bt).setConstant(1.0 / bt);
                w.tail(bm).setConstant(cfg.lambda / bm);
                step.combined = sgd_step(net, x, y, w, cfg.lr, &row_losses);
                step.task_loss = row_losses.head(bt).mean();
                step.memory_loss = row_losses.tail(bm).mean();
            } else {
                const Eigen::VectorXd w = Eigen::VectorXd::Constant(bt, 1.0 / bt);
                step.task_loss = sgd_step(net, xt, yt, w, cfg.lr);
                if (mem) {
                    // lambda = 0: the replay rows are sampled and reported but
                    // contribute nothing to the gradient.
                    step.memory_loss = cross_entropy(forward(net, mem->x), mem->y);
                }
                step.combined = step.task_loss + cfg.lambda * step.memory_loss;
            }

            if (curriculum) {
                buffer.observe_curriculum(task, ks, epoch, cfg.epochs, pool);
            } else {
                buffer.observe(task, ks);
            }

            epoch_loss += step.combined;
            ++epoch_steps;
            ++stats.steps;
            if (spec.record_losses) stats.losses.push_back(step);
        }
        stats.final_epoch_loss = epoch_steps > 0 ? epoch_loss / epoch_steps : 0.0;

        if (curriculum) {
            std::vector<double> loss;
            std::vector<bool> correct;
            scan_train_split(net, task, loss, correct);
            std::vector<CurriculumStat> cur;
            cur.reserve(static_cast<size_t>(task.train_size()));
            for (int k = 0; k < task.train_size(); ++k) {
                if (correct[static_cast<size_t>(k)]) {
                    if (correct_since[static_cast<size_t>(k)] < 0) {
                        correct_since[static_cast<size_t>(k)] = epoch;
                    }
                } else {
                    correct_since[static_cast<size_t>(k)] = -1;
                }
                const double learned = correct_since[static_cast<size_t>(k)] < 0
                                           ? std::numeric_limits<double>::infinity()
                                           : correct_since[static_cast<size_t>(k)];
                cur.push_back({task.train_source(k), learned, loss[static_cast<size_t>(k)]});
            }
            pool = build_easy_pool(cur, task, spec.gamma);
        }
    }

    if (curriculum) buffer.apply_curriculum_replacement(task, pool);
    buffer.seal_staging();
    return stats;
}

LocalUpdateStats local_update(Mlp& net, const Task& task, MemoryBuffer& buffer,
                              const LocalUpdateSpec& spec, uint64_t seed) {
    ReplayUpdater updater;
    return updater.update(net, task, buffer, spec, seed);
}

}  // namespace gpsim
