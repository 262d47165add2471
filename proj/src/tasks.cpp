#include "gpsim/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace gpsim {

namespace {

Eigen::VectorXd fetch(const Dataset& store, const std::vector<int>& perm, int row) {
    const Eigen::VectorXd raw = store.features.row(row).transpose();
    if (perm.empty()) return raw;
    Eigen::VectorXd out(raw.size());
    for (Eigen::Index j = 0; j < raw.size(); ++j) {
        out(j) = raw(perm[static_cast<size_t>(j)]);
    }
    return out;
}

std::vector<int> sorted_classes(const Dataset& store, const std::vector<int>& rows) {
    std::set<int> cs;
    for (int r : rows) cs.insert(store.labels[static_cast<size_t>(r)]);
    return {cs.begin(), cs.end()};
}

std::vector<int> make_perm(int d, uint64_t seed) {
    std::vector<int> p(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) p[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(p);
    return p;
}

std::vector<int> all_rows(const Dataset& store) {
    std::vector<int> rows(static_cast<size_t>(store.features.rows()));
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return rows;
}

}  // namespace

Eigen::VectorXd Task::train_features(int k) const {
    return fetch(*train_store, perm, train_rows.at(static_cast<size_t>(k)));
}

int Task::train_label(int k) const {
    return train_store->labels[static_cast<size_t>(train_rows.at(static_cast<size_t>(k)))];
}

Example Task::train_example(int k) const {
    return Example{train_features(k), train_label(k), id, train_source(k)};
}

Eigen::VectorXd Task::test_features(int k) const {
    return fetch(*test_store, perm, test_rows.at(static_cast<size_t>(k)));
}

int Task::test_label(int k) const {
    return test_store->labels[static_cast<size_t>(test_rows.at(static_cast<size_t>(k)))];
}

int Task::test_source(int k) const {
    return static_cast<int>(train_store->features.rows()) + test_rows.at(static_cast<size_t>(k));
}

Eigen::MatrixXd Task::gather_train(std::span<const int> ks) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ks.size()), feature_dim());
    for (size_t i = 0; i < ks.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = train_features(ks[i]).transpose();
    }
    return out;
}

Eigen::VectorXi Task::gather_train_labels(std::span<const int> ks) const {
    Eigen::VectorXi out(static_cast<Eigen::Index>(ks.size()));
    for (size_t i = 0; i < ks.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = train_label(ks[i]);
    }
    return out;
}

namespace {

uint32_t read_be32(std::ifstream& f, const std::string& path, size_t offset) {
    unsigned char buf[4];
    f.read(reinterpret_cast<char*>(buf), 4);
    if (!f) {
        throw IngestError(path + ": truncated, expected 4 bytes at offset " +
                          std::to_string(offset));
    }
    return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
           uint32_t(buf[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IngestError(images_path + ": cannot open");
    const uint32_t img_magic = read_be32(imgs, images_path, 0);
    if (img_magic != 0x00000803u) {
        throw IngestError(images_path + ": bad magic 0x" + [&] {
            char b[16];
            snprintf(b, sizeof b, "%08x", img_magic);
            return std::string(b);
        }() + " at offset 0, expected 0x00000803");
    }
    const uint32_t count = read_be32(imgs, images_path, 4);
    const uint32_t rows = read_be32(imgs, images_path, 8);
    const uint32_t cols = read_be32(imgs, images_path, 12);
    const size_t pixels = size_t(count) * rows * cols;
    std::vector<unsigned char> buf(pixels);
    imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<size_t>(imgs.gcount()) != pixels) {
        throw IngestError(images_path + ": truncated pixel data, expected " +
                          std::to_string(pixels) + " bytes at offset 16, got " +
                          std::to_string(imgs.gcount()));
    }

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IngestError(labels_path + ": cannot open");
    const uint32_t lab_magic = read_be32(labs, labels_path, 0);
    if (lab_magic != 0x00000801u) {
        throw IngestError(labels_path + ": bad magic at offset 0, expected 0x00000801");
    }
    const uint32_t lab_count = read_be32(labs, labels_path, 4);
    if (lab_count != count) {
        throw IngestError(labels_path + ": label count " + std::to_string(lab_count) +
                          " does not match image count " + std::to_string(count));
    }
    std::vector<unsigned char> lab_buf(lab_count);
    labs.read(reinterpret_cast<char*>(lab_buf.data()), static_cast<std::streamsize>(lab_count));
    if (static_cast<size_t>(labs.gcount()) != lab_count) {
        throw IngestError(labels_path + ": truncated label data, expected " +
                          std::to_string(lab_count) + " bytes at offset 8, got " +
                          std::to_string(labs.gcount()));
    }

    Dataset ds;
    ds.features.resize(count, static_cast<Eigen::Index>(rows) * cols);
    for (uint32_t i = 0; i < count; ++i) {
        for (uint32_t j = 0; j < rows * cols; ++j) {
            ds.features(i, j) = buf[size_t(i) * rows * cols + j] / 255.0;
        }
    }
    ds.labels.assign(lab_buf.begin(), lab_buf.end());
    int max_label = 0;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    ds.num_classes = max_label + 1;
    ds.image_shape = {{static_cast<int>(rows), static_cast<int>(cols)}};
    return ds;
}

TaskStream build_permuted_stream(std::shared_ptr<const Dataset> train,
                                 std::shared_ptr<const Dataset> test, int num_tasks,
                                 const std::vector<uint64_t>& seeds, double subsample_fraction,
                                 uint64_t subsample_seed) {
    if (num_tasks < 1) throw ConfigError("permuted stream needs at least 1 task");
    if (static_cast<int>(seeds.size()) != num_tasks) {
        throw ConfigError("permuted stream needs one seed per task, got " +
                          std::to_string(seeds.size()) + " for " + std::to_string(num_tasks));
    }
    std::set<uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) {
        throw ConfigError("permuted stream seeds must be distinct");
    }
    if (subsample_fraction <= 0.0 || subsample_fraction > 1.0) {
        throw ConfigError("subsample fraction must be in (0, 1], got " +
                          std::to_string(subsample_fraction));
    }

    TaskStream stream;
    stream.num_classes = train->num_classes;
    stream.shared_head = true;
    const std::vector<int> full_train = all_rows(*train);
    const std::vector<int> full_test = all_rows(*test);
    for (int i = 0; i < num_tasks; ++i) {
        Task t;
        t.id = i + 1;
        t.train_store = train;
        t.test_store = test;
        t.test_rows = full_test;
        t.image_shape = train->image_shape;
        if (subsample_fraction < 1.0) {
            const int keep = std::max(
                1, static_cast<int>(std::floor(subsample_fraction *
                                               static_cast<double>(full_train.size()))));
            Rng rng(seed_for(subsample_seed, "subsample", i));
            t.train_rows =
                rng.sample_without_replacement(static_cast<int>(full_train.size()), keep);
            std::sort(t.train_rows.begin(), t.train_rows.end());
        } else {
            t.train_rows = full_train;
        }
        if (i > 0) {
            t.perm = make_perm(static_cast<int>(train->features.cols()), seeds[static_cast<size_t>(i)]);
        }
        t.class_ids = sorted_classes(*train, t.train_rows);
        stream.tasks.push_back(std::move(t));
    }
    return stream;
}

TaskStream build_split_stream(std::shared_ptr<const Dataset> train,
                              std::shared_ptr<const Dataset> test, int classes_per_task,
                              bool shared_head) {
    if (classes_per_task < 1) throw ConfigError("split stream needs classes_per_task >= 1");
    if (train->num_classes % classes_per_task != 0) {
        throw ConfigError("classes_per_task " + std::to_string(classes_per_task) +
                          " does not divide class count " + std::to_string(train->num_classes));
    }
    TaskStream stream;
    stream.num_classes = train->num_classes;
    stream.shared_head = shared_head;
    const int num_tasks = train->num_classes / classes_per_task;
    for (int i = 0; i < num_tasks; ++i) {
        const int lo = i * classes_per_task;
        const int hi = lo + classes_per_task;
        Task t;
        t.id = i + 1;
        t.train_store = train;
        t.test_store = test;
        t.image_shape = train->image_shape;
        for (size_t r = 0; r < train->labels.size(); ++r) {
            const int y = train->labels[r];
            if (y >= lo && y < hi) t.train_rows.push_back(static_cast<int>(r));
        }
        for (size_t r = 0; r < test->labels.size(); ++r) {
            const int y = test->labels[r];
            if (y >= lo && y < hi) t.test_rows.push_back(static_cast<int>(r));
        }
        for (int c = lo; c < hi; ++c) t.class_ids.push_back(c);
        stream.tasks.push_back(std::move(t));
    }
    return stream;
}

namespace {

Eigen::VectorXd blob_image(int h, int w, double cx, double cy, double radius, double amplitude) {
    Eigen::VectorXd img(static_cast<Eigen::Index>(h) * w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
            img(static_cast<Eigen::Index>(r) * w + c) =
                amplitude * std::exp(-d2 / (2.0 * radius * radius));
        }
    }
    return img;
}

}  // namespace

TaskStream build_synthetic_stream(const SyntheticSpec& spec) {
    if (spec.num_tasks < 1 || spec.classes < 2 || spec.examples_per_task < spec.classes) {
        throw ConfigError("synthetic stream needs >=1 task, >=2 classes and at least one example per class");
    }
    if (!spec.class_freq.empty() && static_cast<int>(spec.class_freq.size()) != spec.classes) {
        throw ConfigError("class_freq needs one weight per class");
    }
    int dim = spec.dim;
    if (spec.image_shape) {
        dim = (*spec.image_shape)[0] * (*spec.image_shape)[1];
    }
    std::vector<double> freq = spec.class_freq;
    if (freq.empty()) freq.assign(static_cast<size_t>(spec.classes), 1.0);
    double freq_total = 0.0;
    for (double f : freq) {
        if (f < 0.0) throw ConfigError("class_freq weights must be non-negative");
        freq_total += f;
    }
    if (freq_total <= 0.0) throw ConfigError("class_freq weights must not all be zero");

    TaskStream stream;
    stream.num_classes = spec.classes;
    stream.shared_head = true;
    for (int i = 0; i < spec.num_tasks; ++i) {
        Rng rng(seed_for(spec.seed, "synthetic-task", i));

        // Fresh class means per task: the stream is a sequence of related but
        // distinct classification problems over one label space.
        std::vector<Eigen::VectorXd> means;
        for (int c = 0; c < spec.classes; ++c) {
            if (spec.image_shape) {
                const int h = (*spec.image_shape)[0];
                const int w = (*spec.image_shape)[1];
                const double cx = 1.0 + rng.uniform() * (w - 2);
                const double cy = 1.0 + rng.uniform() * (h - 2);
                const double radius = 0.08 * (h + w) / 2.0 + rng.uniform() * 0.10 * (h + w) / 2.0;
                means.push_back(blob_image(h, w, cx, cy, radius, spec.separation));
            } else {
                Eigen::VectorXd dir(dim);
                for (int j = 0; j < dim; ++j) dir(j) = rng.normal();
                dir.normalize();
                means.push_back(spec.separation * dir);
            }
        }

        auto ds = std::make_shared<Dataset>();
        ds->num_classes = spec.classes;
        ds->image_shape = spec.image_shape;
        ds->features.resize(spec.examples_per_task, dim);
        ds->labels.resize(static_cast<size_t>(spec.examples_per_task));
        for (int n = 0; n < spec.examples_per_task; ++n) {
            double u = rng.uniform() * freq_total;
            int y = spec.classes - 1;
            for (int c = 0; c < spec.classes; ++c) {
                if (u < freq[static_cast<size_t>(c)]) {
                    y = c;
                    break;
                }
                u -= freq[static_cast<size_t>(c)];
            }
            Eigen::VectorXd x = means[static_cast<size_t>(y)];
            for (int j = 0; j < dim; ++j) x(j) += spec.noise_sigma * rng.normal();
            ds->features.row(n) = x.transpose();
            ds->labels[static_cast<size_t>(n)] = y;
        }

        // Seeded 20% holdout.
        std::vector<int> rows = all_rows(*ds);
        Rng split_rng(seed_for(spec.seed, "synthetic-split", i));
        split_rng.shuffle(rows);
        const int test_count = std::max(1, spec.examples_per_task / 5);
        Task t;
        t.id = i + 1;
        t.train_store = ds;
        t.test_store = ds;
        t.test_rows.assign(rows.begin(), rows.begin() + test_count);
        t.train_rows.assign(rows.begin() + test_count, rows.end());
        std::sort(t.test_rows.begin(), t.test_rows.end());
        std::sort(t.train_rows.begin(), t.train_rows.end());
        t.image_shape = spec.image_shape;
        t.class_ids = sorted_classes(*ds, t.train_rows);
        stream.tasks.push_back(std::move(t));
    }
    return stream;
}

EvalResult evaluate_task(const Mlp& net, const Task& task, bool test_split,
                         const std::vector<int>* class_mask) {
    const std::vector<int>& rows = test_split ? task.test_rows : task.train_rows;
    const Dataset& store = test_split ? *task.test_store : *task.train_store;
    constexpr int kChunk = 1024;

    EvalResult total;
    double loss_sum = 0.0;
    double correct = 0.0;
    for (size_t start = 0; start < rows.size(); start += kChunk) {
        const size_t end = std::min(rows.size(), start + kChunk);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(end - start), task.feature_dim());
        Eigen::VectorXi y(static_cast<Eigen::Index>(end - start));
        for (size_t k = start; k < end; ++k) {
            x.row(static_cast<Eigen::Index>(k - start)) =
                fetch(store, task.perm, rows[k]).transpose();
            y(static_cast<Eigen::Index>(k - start)) = store.labels[static_cast<size_t>(rows[k])];
        }
        const EvalResult r = evaluate(net, x, y, class_mask);
        loss_sum += r.mean_loss * r.count;
        correct += r.accuracy * r.count;
        total.count += r.count;
    }
    if (total.count == 0) throw ContractError("task has no rows to evaluate");
    total.accuracy = correct / total.count;
    total.mean_loss = loss_sum / total.count;
    return total;
}

EvalResult evaluate_on_stream_task(const Mlp& net, const TaskStream& stream, int task_index) {
    const Task& t = stream.task(task_index);
    if (stream.shared_head) return evaluate_task(net, t, true, nullptr);
    return evaluate_task(net, t, true, &t.class_ids);
}

double train_single_task(Mlp& net, const Task& task, const TrainConfig& cfg, uint64_t seed) {
    Rng shuffle_rng(seed_for(seed, "shuffle"));
    double last_epoch_loss = 0.0;
    for (int e = 0; e < cfg.epochs; ++e) {
        double loss_sum = 0.0;
        int steps = 0;
        for (const auto& batch : epoch_batches(task.train_size(), cfg.batch_size, shuffle_rng)) {
            const Eigen::MatrixXd x = task.gather_train(batch);
            const Eigen::VectorXi y = task.gather_train_labels(batch);
            const Eigen::VectorXd w = Eigen::VectorXd::Constant(
                x.rows(), 1.0 / static_cast<double>(x.rows()));
            loss_sum += sgd_step(net, x, y, w, cfg.lr);
            ++steps;
        }
        last_epoch_loss = steps > 0 ? loss_sum / steps : 0.0;
    }
    return last_epoch_loss;
}

double end_to_end_difficulty(const Task& task, const TrainConfig& cfg, uint64_t seed) {
    Mlp net = Mlp::make(
        [&] {
            std::vector<int> dims{static_cast<int>(task.feature_dim())};
            dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
            dims.push_back(task.train_store->num_classes);
            return dims;
        }(),
        seed_for(seed, "init"));
    train_single_task(net, task, cfg, seed_for(seed, "train"));
    return evaluate_task(net, task).accuracy;
}

double zero_shot_transfer(const Mlp& net, const Task& task) {
    return evaluate_task(net, task).accuracy;
}

}  // namespace gpsim
