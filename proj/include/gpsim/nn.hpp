#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "gpsim/common.hpp"

namespace gpsim {

// Fully-connected net with ReLU hidden layers and a linear output layer.
// Parameters are doubles throughout; copies are value-semantic snapshots.
struct DenseLayer {
    Eigen::MatrixXd w;  // rows = outputs, cols = inputs
    Eigen::VectorXd b;
};

struct Mlp {
    std::vector<DenseLayer> layers;

    // dims = {input, hidden..., output}. Weights and biases are drawn
    // uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded; the draw
    // order (per layer: weights row-major, then bias) is part of the
    // determinism contract.
    static Mlp make(const std::vector<int>& dims, uint64_t seed);

    int input_dim() const { return static_cast<int>(layers.front().w.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().w.rows()); }
};

struct TrainConfig {
    double lr = 0.1;
    int epochs = 5;
    int batch_size = 10;
    double lambda = 1.0;            // replay weight in the joint objective
    std::vector<int> hidden{100, 100};
};

// Logits for a batch; inputs are rows. Throws ContractError on a dimension
// mismatch.
Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& inputs);

// Mean softmax cross-entropy, computed via log-sum-exp. Throws ContractError
// if a label is outside [0, C).
double cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels);

// One SGD step on weighted per-row losses: loss = sum_i w_i * ce_i. Plain
// mean-loss training is the special case w_i = 1/B. Returns the weighted loss
// measured before the update; per-row unweighted losses are written to
// row_losses when given. Throws NumericError if the loss is non-finite.
double sgd_step(Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXi& labels,
                const Eigen::VectorXd& row_weights, double lr,
                Eigen::VectorXd* row_losses = nullptr);

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    int count = 0;
};

// Accuracy (argmax; ties resolve to the lowest class index) and mean
// cross-entropy. When class_mask is given, both the argmax and the softmax
// are restricted to the listed classes.
EvalResult evaluate(const Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXi& labels,
                    const std::vector<int>* class_mask = nullptr);

// Index batches for one epoch: a seeded shuffle of [0, n) cut into
// batch_size chunks, final partial chunk kept. Shared by every training loop
// so trajectories stay bit-identical across call sites.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng);

}  // namespace gpsim
