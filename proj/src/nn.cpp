#include "gpsim/nn.hpp"

#include <cmath>
#include <string>

namespace gpsim {

Mlp Mlp::make(const std::vector<int>& dims, uint64_t seed) {
    if (dims.size() < 2) {
        throw ConfigError("mlp needs at least input and output dims, got " +
                          std::to_string(dims.size()));
    }
    for (int d : dims) {
        if (d <= 0) throw ConfigError("mlp layer dim must be positive, got " + std::to_string(d));
    }
    Rng rng(seed);
    Mlp net;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        DenseLayer layer;
        layer.w.resize(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) {
                layer.w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
            }
        }
        layer.b.resize(fan_out);
        for (int r = 0; r < fan_out; ++r) {
            layer.b(r) = (2.0 * rng.uniform() - 1.0) * bound;
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

void check_input_dim(const Mlp& net, const Eigen::MatrixXd& inputs) {
    if (inputs.cols() != net.layers.front().w.cols()) {
        throw ContractError("input dim " + std::to_string(inputs.cols()) +
                            " does not match model input dim " +
                            std::to_string(net.layers.front().w.cols()));
    }
}

// Forward pass keeping post-ReLU activations of every layer input; a[0] is
// the batch itself, a[L] holds the logits.
std::vector<Eigen::MatrixXd> forward_cached(const Mlp& net, const Eigen::MatrixXd& inputs) {
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(net.layers.size() + 1);
    acts.push_back(inputs);
    for (size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        Eigen::MatrixXd z = acts.back() * layer.w.transpose();
        z.rowwise() += layer.b.transpose();
        if (l + 1 < net.layers.size()) {
            z = z.cwiseMax(0.0);
        }
        acts.push_back(std::move(z));
    }
    return acts;
}

// Row-wise log softmax denominator: m_i + log(sum_j exp(z_ij - m_i)).
Eigen::VectorXd log_sum_exp_rows(const Eigen::MatrixXd& z) {
    Eigen::VectorXd m = z.rowwise().maxCoeff();
    Eigen::VectorXd lse(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        lse(i) = m(i) + std::log((z.row(i).array() - m(i)).exp().sum());
    }
    return lse;
}

void check_labels(const Eigen::VectorXi& labels, Eigen::Index rows, Eigen::Index classes) {
    if (labels.size() != rows) {
        throw ContractError("label count " + std::to_string(labels.size()) +
                            " does not match batch rows " + std::to_string(rows));
    }
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        if (labels(i) < 0 || labels(i) >= classes) {
            throw ContractError("label " + std::to_string(labels(i)) + " at row " +
                                std::to_string(i) + " outside [0, " + std::to_string(classes) +
                                ")");
        }
    }
}

}  // namespace

Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& inputs) {
    check_input_dim(net, inputs);
    Eigen::MatrixXd a = inputs;
    for (size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        Eigen::MatrixXd z = a * layer.w.transpose();
        z.rowwise() += layer.b.transpose();
        if (l + 1 < net.layers.size()) {
            z = z.cwiseMax(0.0);
        }
        a = std::move(z);
    }
    return a;
}

double cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels) {
    check_labels(labels, logits.rows(), logits.cols());
    const Eigen::VectorXd lse = log_sum_exp_rows(logits);
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        total += lse(i) - logits(i, labels(i));
    }
    return total / static_cast<double>(logits.rows());
}

double sgd_step(Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXi& labels,
                const Eigen::VectorXd& row_weights, double lr, Eigen::VectorXd* row_losses) {
    check_input_dim(net, inputs);
    if (row_weights.size() != inputs.rows()) {
        throw ContractError("row weight count " + std::to_string(row_weights.size()) +
                            " does not match batch rows " + std::to_string(inputs.rows()));
    }
    const auto acts = forward_cached(net, inputs);
    const Eigen::MatrixXd& logits = acts.back();
    check_labels(labels, logits.rows(), logits.cols());
    if (row_losses) row_losses->resize(inputs.rows());

    const Eigen::VectorXd lse = log_sum_exp_rows(logits);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double li = lse(i) - logits(i, labels(i));
        loss += row_weights(i) * li;
        if (row_losses) (*row_losses)(i) = li;
    }
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss " + std::to_string(loss) + " on a batch of " +
                           std::to_string(inputs.rows()) + " rows");
    }

    // delta = d(loss)/d(logits): softmax row minus one-hot, scaled per row.
    Eigen::MatrixXd delta = (logits.colwise() - lse).array().exp();
    for (Eigen::Index i = 0; i < delta.rows(); ++i) {
        delta(i, labels(i)) -= 1.0;
        delta.row(i) *= row_weights(i);
    }

    for (size_t l = net.layers.size(); l-- > 0;) {
        DenseLayer& layer = net.layers[l];
        const Eigen::MatrixXd grad_w = delta.transpose() * acts[l];
        const Eigen::VectorXd grad_b = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd next = delta * layer.w;
            next.array() *= (acts[l].array() > 0.0).cast<double>();
            delta = std::move(next);
        }
        layer.w.noalias() -= lr * grad_w;
        layer.b -= lr * grad_b;
    }
    return loss;
}

EvalResult evaluate(const Mlp& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXi& labels,
                    const std::vector<int>* class_mask) {
    const Eigen::MatrixXd logits = forward(net, inputs);
    check_labels(labels, logits.rows(), logits.cols());
    if (class_mask && class_mask->empty()) {
        throw ContractError("class mask must not be empty");
    }

    EvalResult out;
    out.count = static_cast<int>(logits.rows());
    double total_loss = 0.0;
    int correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        int best = -1;
        double best_v = 0.0;
        double m = 0.0;
        bool first = true;
        auto consider = [&](int c) {
            const double v = logits(i, c);
            if (first || v > best_v) {
                best = c;
                best_v = v;
            }
            if (first || v > m) m = v;
            first = false;
        };
        if (class_mask) {
            for (int c : *class_mask) {
                if (c < 0 || c >= logits.cols()) {
                    throw ContractError("class mask entry " + std::to_string(c) +
                                        " outside [0, " + std::to_string(logits.cols()) + ")");
                }
                consider(c);
            }
        } else {
            for (int c = 0; c < logits.cols(); ++c) consider(c);
        }
        if (best == labels(i)) ++correct;

        double sum = 0.0;
        if (class_mask) {
            for (int c : *class_mask) sum += std::exp(logits(i, c) - m);
        } else {
            sum = (logits.row(i).array() - m).exp().sum();
        }
        total_loss += m + std::log(sum) - logits(i, labels(i));
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.count);
    out.mean_loss = total_loss / static_cast<double>(out.count);
    return out;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size, Rng& rng) {
    if (batch_size <= 0) {
        throw ConfigError("batch size must be positive, got " + std::to_string(batch_size));
    }
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

}  // namespace gpsim
