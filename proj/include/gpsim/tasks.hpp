#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpsim/nn.hpp"

namespace gpsim {

// Immutable example store. Tasks reference rows of a shared store instead of
// copying features, so a ten-task image stream costs one copy of the data.
struct Dataset {
    Eigen::MatrixXd features;  // one example per row, values scaled to [0, 1] for images
    std::vector<int> labels;
    int num_classes = 0;
    std::optional<std::array<int, 2>> image_shape;  // {height, width}, rows*cols == feature dim
};

// One stored example. Buffers and batches materialize these; task_id and
// source_index keep provenance for invariant checks and snapshots.
struct Example {
    Eigen::VectorXd x;
    int label = 0;
    int task_id = 0;
    int source_index = 0;
};

// Assembled minibatch with provenance.
struct Batch {
    Eigen::MatrixXd x;
    Eigen::VectorXi y;
    std::vector<int> task_ids;

    int rows() const { return static_cast<int>(x.rows()); }
};

// A view of train/test rows in shared stores, with an optional fixed pixel
// permutation applied on fetch. source_index is the train-store row for train
// examples and train-store-size + row for test examples, so the two splits
// never collide.
class Task {
public:
    int id = 0;
    std::shared_ptr<const Dataset> train_store;
    std::shared_ptr<const Dataset> test_store;  // may alias train_store
    std::vector<int> train_rows;
    std::vector<int> test_rows;
    std::vector<int> perm;  // empty means identity
    std::vector<int> class_ids;  // sorted global class ids present in this task
    std::optional<std::array<int, 2>> image_shape;

    int train_size() const { return static_cast<int>(train_rows.size()); }
    int test_size() const { return static_cast<int>(test_rows.size()); }
    int feature_dim() const { return static_cast<int>(train_store->features.cols()); }

    Eigen::VectorXd train_features(int k) const;
    int train_label(int k) const;
    int train_source(int k) const { return train_rows.at(static_cast<size_t>(k)); }
    Example train_example(int k) const;

    Eigen::VectorXd test_features(int k) const;
    int test_label(int k) const;
    int test_source(int k) const;

    // Batch assembly: one row per listed train index.
    Eigen::MatrixXd gather_train(std::span<const int> ks) const;
    Eigen::VectorXi gather_train_labels(std::span<const int> ks) const;
};

struct TaskStream {
    std::vector<Task> tasks;
    int num_classes = 0;
    bool shared_head = true;  // false restricts evaluation to each task's own classes

    int size() const { return static_cast<int>(tasks.size()); }
    const Task& task(int i) const { return tasks.at(static_cast<size_t>(i)); }
};

// IDX (big-endian) image/label reader. Pixels are scaled to [0, 1]. Errors
// name the file and byte offset of the offending field.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Permuted-image stream: task 1 is the base data unpermuted; task i > 1 applies
// one fixed pixel permutation drawn from seeds[i-1]. Seeds must be distinct.
// subsample_fraction < 1 keeps a seeded random fraction of each task's train
// rows (test rows stay complete).
TaskStream build_permuted_stream(std::shared_ptr<const Dataset> train,
                                 std::shared_ptr<const Dataset> test, int num_tasks,
                                 const std::vector<uint64_t>& seeds,
                                 double subsample_fraction = 1.0, uint64_t subsample_seed = 0);

// Class-split stream: tasks take consecutive blocks of classes_per_task
// classes in label order. Evaluation is per-task-head unless shared_head.
TaskStream build_split_stream(std::shared_ptr<const Dataset> train,
                              std::shared_ptr<const Dataset> test, int classes_per_task,
                              bool shared_head = false);

// Synthetic Gaussian-cluster stream. Each task draws fresh class means
// (random directions scaled by separation, or Gaussian blob images when
// image_shape is set) and samples examples_per_task points with per-class
// frequencies class_freq; 20% are held out as the test split, seeded.
struct SyntheticSpec {
    int num_tasks = 3;
    int dim = 16;
    int classes = 4;
    int examples_per_task = 500;
    double separation = 3.0;
    double noise_sigma = 1.0;
    std::vector<double> class_freq;  // empty means uniform; else one weight per class
    std::optional<std::array<int, 2>> image_shape;  // blob-image mode
    uint64_t seed = 0;
};

TaskStream build_synthetic_stream(const SyntheticSpec& spec);

// Accuracy/mean loss of the model on one task split, evaluated in chunks.
EvalResult evaluate_task(const Mlp& net, const Task& task, bool test_split = true,
                         const std::vector<int>* class_mask = nullptr);

// Mask helper honoring the stream's head mode.
EvalResult evaluate_on_stream_task(const Mlp& net, const TaskStream& stream, int task_index);

// Test accuracy of a fresh model trained on this task alone — the per-task
// difficulty probe used to compare stream members.
double end_to_end_difficulty(const Task& task, const TrainConfig& cfg, uint64_t seed);

// Test accuracy of an already-trained model on an unseen task.
double zero_shot_transfer(const Mlp& net, const Task& task);

// Plain single-task SGD; the replay trainer with an empty buffer follows the
// exact same trajectory. Returns final epoch mean training loss.
double train_single_task(Mlp& net, const Task& task, const TrainConfig& cfg, uint64_t seed);

}  // namespace gpsim
