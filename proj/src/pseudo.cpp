#include "gpsim/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace gpsim {

SynthesisMethod synthesis_method_from_string(const std::string& name) {
    if (name == "permutation") return SynthesisMethod::Permutation;
    if (name == "rotation") return SynthesisMethod::Rotation;
    if (name == "blurring") return SynthesisMethod::Blurring;
    throw ConfigError("unknown synthesis method '" + name +
                      "' (expected permutation, rotation or blurring)");
}

const char* synthesis_method_name(SynthesisMethod m) {
    switch (m) {
        case SynthesisMethod::Permutation: return "permutation";
        case SynthesisMethod::Rotation: return "rotation";
        case SynthesisMethod::Blurring: return "blurring";
    }
    return "unknown";
}

Eigen::VectorXd rotate_image(const Eigen::VectorXd& img, int height, int width, double degrees) {
    if (img.size() != static_cast<Eigen::Index>(height) * width) {
        throw ContractError("image size " + std::to_string(img.size()) + " does not match " +
                            std::to_string(height) + "x" + std::to_string(width));
    }
    const double rad = degrees * M_PI / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double cy = (height - 1) / 2.0;
    const double cx = (width - 1) / 2.0;
    Eigen::VectorXd out(img.size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            // Inverse mapping: where in the source does this pixel come from.
            const double dy = r - cy;
            const double dx = c - cx;
            const double sy = cy + dy * cs - dx * sn;
            const double sx = cx + dy * sn + dx * cs;
            double v = 0.0;
            const int y0 = static_cast<int>(std::floor(sy));
            const int x0 = static_cast<int>(std::floor(sx));
            const double fy = sy - y0;
            const double fx = sx - x0;
            auto at = [&](int yy, int xx) -> double {
                if (yy < 0 || yy >= height || xx < 0 || xx >= width) return 0.0;
                return img(static_cast<Eigen::Index>(yy) * width + xx);
            };
            v = at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx +
                at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
            out(static_cast<Eigen::Index>(r) * width + c) = v;
        }
    }
    return out;
}

Eigen::VectorXd blur_image(const Eigen::VectorXd& img, int height, int width, double sigma,
                           int kernel) {
    if (img.size() != static_cast<Eigen::Index>(height) * width) {
        throw ContractError("image size " + std::to_string(img.size()) + " does not match " +
                            std::to_string(height) + "x" + std::to_string(width));
    }
    if (kernel < 1 || kernel % 2 == 0) {
        throw ConfigError("blur kernel must be odd and positive, got " + std::to_string(kernel));
    }
    const int half = kernel / 2;
    Eigen::MatrixXd k(kernel, kernel);
    for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
            k(dy + half, dx + half) = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        }
    }
    k /= k.sum();
    Eigen::VectorXd out(img.size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double v = 0.0;
            for (int dy = -half; dy <= half; ++dy) {
                for (int dx = -half; dx <= half; ++dx) {
                    const int yy = r + dy;
                    const int xx = c + dx;
                    if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;  // zero pad
                    v += k(dy + half, dx + half) * img(static_cast<Eigen::Index>(yy) * width + xx);
                }
            }
            out(static_cast<Eigen::Index>(r) * width + c) = v;
        }
    }
    return out;
}

namespace {

// Class-stratified pick of n train indices: proportional shares per class,
// remainder to the largest classes, seeded selection within each class.
std::vector<int> stratified_subsample(const Task& base, int n, uint64_t seed) {
    std::map<int, std::vector<int>> by_class;
    for (int k = 0; k < base.train_size(); ++k) by_class[base.train_label(k)].push_back(k);
    const int total = base.train_size();
    n = std::min(n, total);

    // Floor shares first, then distribute the remainder by largest fraction.
    std::vector<std::pair<double, int>> frac;  // (-fractional part, class)
    std::map<int, int> share;
    int assigned = 0;
    for (const auto& [c, ks] : by_class) {
        const double exact = static_cast<double>(n) * ks.size() / total;
        share[c] = std::min(static_cast<int>(ks.size()), static_cast<int>(std::floor(exact)));
        assigned += share[c];
        frac.push_back({-(exact - std::floor(exact)), c});
    }
    std::sort(frac.begin(), frac.end());
    for (const auto& [neg, c] : frac) {
        if (assigned >= n) break;
        if (share[c] < static_cast<int>(by_class[c].size())) {
            share[c] += 1;
            ++assigned;
        }
    }

    std::vector<int> picked;
    for (auto& [c, ks] : by_class) {
        Rng rng(seed_for(seed, "stratum", c));
        rng.shuffle(ks);
        for (int i = 0; i < share[c]; ++i) picked.push_back(ks[static_cast<size_t>(i)]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

std::vector<int> permutation_for(int dim, uint64_t seed) {
    std::vector<int> p(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) p[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(p);
    return p;
}

}  // namespace

std::vector<Task> synthesize_sequence(const Task& base, const SynthesisSpec& spec) {
    if (spec.count < 1) throw ConfigError("synthesis needs count >= 1");
    if (spec.examples_per_task < 1) throw ConfigError("synthesis needs examples_per_task >= 1");
    if (spec.first_task_id <= base.id) {
        throw ContractError("pseudo task ids must exceed real task ids; got first id " +
                            std::to_string(spec.first_task_id) + " for base task " +
                            std::to_string(base.id));
    }
    const bool needs_image =
        spec.method == SynthesisMethod::Rotation || spec.method == SynthesisMethod::Blurring;
    if (needs_image && !base.image_shape) {
        throw ConfigError(std::string(synthesis_method_name(spec.method)) +
                          " synthesis requires an image shape");
    }

    // One subsample, reused by every pseudo task in the sequence.
    const std::vector<int> ks =
        stratified_subsample(base, spec.examples_per_task, seed_for(spec.seed, "subsample"));

    const int dim = base.feature_dim();
    const int h = base.image_shape ? (*base.image_shape)[0] : 0;
    const int w = base.image_shape ? (*base.image_shape)[1] : 0;

    std::vector<Task> out;
    for (int step = 1; step <= spec.count; ++step) {
        auto transform = [&](const Eigen::VectorXd& x,
                             const std::vector<int>& perm) -> Eigen::VectorXd {
            switch (spec.method) {
                case SynthesisMethod::Permutation: {
                    Eigen::VectorXd y(x.size());
                    for (Eigen::Index j = 0; j < x.size(); ++j) {
                        y(j) = x(perm[static_cast<size_t>(j)]);
                    }
                    return y;
                }
                case SynthesisMethod::Rotation:
                    // Cumulative: the k-th pseudo task is k steps away.
                    return rotate_image(x, h, w, spec.rotation_step_degrees * step);
                case SynthesisMethod::Blurring:
                    return blur_image(x, h, w, spec.blur_sigma_step * step, spec.blur_kernel);
            }
            throw ContractError("unhandled synthesis method");
        };

        std::vector<int> perm;
        if (spec.method == SynthesisMethod::Permutation) {
            perm = permutation_for(dim, seed_for(spec.seed, "pseudo-perm", step));
        }

        auto train_ds = std::make_shared<Dataset>();
        train_ds->num_classes = base.train_store->num_classes;
        train_ds->image_shape = base.image_shape;
        train_ds->features.resize(static_cast<Eigen::Index>(ks.size()), dim);
        train_ds->labels.resize(ks.size());
        for (size_t i = 0; i < ks.size(); ++i) {
            train_ds->features.row(static_cast<Eigen::Index>(i)) =
                transform(base.train_features(ks[i]), perm).transpose();
            train_ds->labels[i] = base.train_label(static_cast<int>(ks[i]));
        }

        Task t;
        t.id = spec.first_task_id + (step - 1);
        t.image_shape = base.image_shape;
        t.train_store = train_ds;
        t.train_rows.resize(ks.size());
        for (size_t i = 0; i < ks.size(); ++i) t.train_rows[i] = static_cast<int>(i);
        t.test_store = train_ds;

        if (spec.include_test) {
            int test_n = base.test_size();
            if (spec.test_limit > 0) test_n = std::min(test_n, spec.test_limit);
            auto test_ds = std::make_shared<Dataset>();
            test_ds->num_classes = base.test_store->num_classes;
            test_ds->image_shape = base.image_shape;
            test_ds->features.resize(test_n, dim);
            test_ds->labels.resize(static_cast<size_t>(test_n));
            for (int i = 0; i < test_n; ++i) {
                test_ds->features.row(i) = transform(base.test_features(i), perm).transpose();
                test_ds->labels[static_cast<size_t>(i)] = base.test_label(i);
            }
            t.test_store = test_ds;
            t.test_rows.resize(static_cast<size_t>(test_n));
            for (int i = 0; i < test_n; ++i) t.test_rows[static_cast<size_t>(i)] = i;
        }

        std::set<int> cs(train_ds->labels.begin(), train_ds->labels.end());
        t.class_ids.assign(cs.begin(), cs.end());
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace gpsim
