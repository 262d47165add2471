#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "gpsim/tasks.hpp"

using namespace gpsim;

namespace {

void put_be32(std::ofstream& f, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxFixture {
    std::filesystem::path dir;
    std::string images;
    std::string labels;

    IdxFixture() {
        dir = std::filesystem::temp_directory_path() / "gpsim_idx_test";
        std::filesystem::create_directories(dir);
        images = (dir / "imgs").string();
        labels = (dir / "labs").string();
    }

    // Two 2x3 images: pixel value = position index, and its reverse.
    void write_valid() {
        std::ofstream fi(images, std::ios::binary);
        put_be32(fi, 0x00000803u);
        put_be32(fi, 2);
        put_be32(fi, 2);
        put_be32(fi, 3);
        for (unsigned char p = 0; p < 6; ++p) fi.put(static_cast<char>(p * 40));
        for (int p = 5; p >= 0; --p) fi.put(static_cast<char>(p * 40));
        fi.close();

        std::ofstream fl(labels, std::ios::binary);
        put_be32(fl, 0x00000801u);
        put_be32(fl, 2);
        fl.put(3);
        fl.put(0);
    }
};

TaskStream tiny_synthetic(uint64_t seed = 9, int tasks = 3) {
    SyntheticSpec spec;
    spec.num_tasks = tasks;
    spec.dim = 6;
    spec.classes = 3;
    spec.examples_per_task = 90;
    spec.separation = 3.0;
    spec.noise_sigma = 0.8;
    spec.seed = seed;
    return build_synthetic_stream(spec);
}

}  // namespace

TEST_CASE("tasks: idx loader reads valid files") {
    IdxFixture fx;
    fx.write_valid();
    const Dataset ds = load_idx(fx.images, fx.labels);
    CHECK(ds.features.rows() == 2);
    CHECK(ds.features.cols() == 6);
    CHECK(ds.features(0, 0) == doctest::Approx(0.0));
    CHECK(ds.features(0, 5) == doctest::Approx(200.0 / 255.0));
    CHECK(ds.features(1, 0) == doctest::Approx(200.0 / 255.0));
    CHECK(ds.labels == std::vector<int>{3, 0});
    CHECK(ds.num_classes == 4);
    REQUIRE(ds.image_shape.has_value());
    CHECK((*ds.image_shape)[0] == 2);
    CHECK((*ds.image_shape)[1] == 3);
}

TEST_CASE("tasks: idx loader rejects bad magic, truncation, count mismatch") {
    IdxFixture fx;
    fx.write_valid();
    CHECK_THROWS_AS(load_idx(fx.images + ".missing", fx.labels), IngestError);

    {
        std::ofstream fi(fx.images, std::ios::binary);
        put_be32(fi, 0x00000801u);  // label magic in the image file
    }
    CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                         doctest::Contains("bad magic"), IngestError);

    fx.write_valid();
    std::filesystem::resize_file(fx.images, 16 + 7);  // cut pixel payload short
    CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                         doctest::Contains("truncated"), IngestError);

    fx.write_valid();
    {
        std::ofstream fl(fx.labels, std::ios::binary);
        put_be32(fl, 0x00000801u);
        put_be32(fl, 3);  // claims 3 labels for 2 images
        fl.put(1);
        fl.put(2);
        fl.put(0);
    }
    CHECK_THROWS_WITH_AS(load_idx(fx.images, fx.labels),
                         doctest::Contains("does not match"), IngestError);
}

TEST_CASE("tasks: permuted stream fixes task 1 and permutes the rest") {
    IdxFixture fx;
    fx.write_valid();
    auto ds = std::make_shared<Dataset>(load_idx(fx.images, fx.labels));

    const std::vector<uint64_t> seeds{11, 22, 33};
    const auto stream = build_permuted_stream(ds, ds, 3, seeds);
    REQUIRE(stream.size() == 3);
    CHECK(stream.num_classes == 4);
    CHECK(stream.shared_head);

    CHECK(stream.task(0).perm.empty());
    CHECK_FALSE(stream.task(1).perm.empty());
    CHECK_FALSE(stream.task(2).perm.empty());
    CHECK(stream.task(1).perm != stream.task(2).perm);

    // Fetch applies the stored permutation: out[j] = raw[perm[j]].
    const auto& t = stream.task(1);
    const Eigen::VectorXd raw = ds->features.row(0);
    const Eigen::VectorXd got = t.train_features(0);
    for (int j = 0; j < 6; ++j) {
        CHECK(got(j) == raw(t.perm[static_cast<size_t>(j)]));
    }
    // Labels and sizes are untouched by the pixel permutation.
    CHECK(t.train_label(0) == ds->labels[0]);
    CHECK(t.train_size() == 2);
    CHECK(t.test_size() == 2);

    CHECK_THROWS_AS(build_permuted_stream(ds, ds, 3, {11, 11, 33}), ConfigError);
    CHECK_THROWS_AS(build_permuted_stream(ds, ds, 3, {11, 22}), ConfigError);
}

TEST_CASE("tasks: permuted stream subsampling keeps test split complete") {
    auto store = std::make_shared<Dataset>();
    store->features = Eigen::MatrixXd::Random(100, 9);
    store->labels.assign(100, 0);
    for (int i = 0; i < 100; ++i) store->labels[static_cast<size_t>(i)] = i % 5;
    store->num_classes = 5;

    const auto stream = build_permuted_stream(store, store, 2, {1, 2}, 0.25, 99);
    CHECK(stream.task(0).train_size() == 25);
    CHECK(stream.task(1).train_size() == 25);
    CHECK(stream.task(0).test_size() == 100);

    // Same subsample seed, same rows; rows are sorted and in range.
    const auto again = build_permuted_stream(store, store, 2, {1, 2}, 0.25, 99);
    CHECK(again.task(1).train_rows == stream.task(1).train_rows);
    CHECK(std::is_sorted(stream.task(1).train_rows.begin(), stream.task(1).train_rows.end()));
}

TEST_CASE("tasks: split stream blocks classes in label order") {
    auto store = std::make_shared<Dataset>();
    store->features = Eigen::MatrixXd::Random(60, 4);
    store->labels.assign(60, 0);
    for (int i = 0; i < 60; ++i) store->labels[static_cast<size_t>(i)] = i % 6;
    store->num_classes = 6;

    const auto stream = build_split_stream(store, store, 2);
    REQUIRE(stream.size() == 3);
    CHECK_FALSE(stream.shared_head);
    CHECK(stream.task(0).class_ids == std::vector<int>{0, 1});
    CHECK(stream.task(1).class_ids == std::vector<int>{2, 3});
    CHECK(stream.task(2).class_ids == std::vector<int>{4, 5});
    for (int k = 0; k < stream.task(1).train_size(); ++k) {
        const int y = stream.task(1).train_label(k);
        CHECK(y >= 2);
        CHECK(y <= 3);
    }
}

TEST_CASE("tasks: synthetic stream shapes, holdout, determinism") {
    const auto stream = tiny_synthetic();
    REQUIRE(stream.size() == 3);
    CHECK(stream.num_classes == 3);
    for (int i = 0; i < 3; ++i) {
        const auto& t = stream.task(i);
        CHECK(t.id == i + 1);
        CHECK(t.feature_dim() == 6);
        CHECK(t.test_size() == 18);  // 20% of 90
        CHECK(t.train_size() == 72);
        CHECK(t.class_ids == std::vector<int>{0, 1, 2});

        // Train and test rows never overlap.
        std::set<int> train(t.train_rows.begin(), t.train_rows.end());
        for (int row : t.test_rows) CHECK(train.count(row) == 0);
    }

    const auto same = tiny_synthetic();
    CHECK((stream.task(2).train_features(5) - same.task(2).train_features(5)).norm() == 0.0);
    const auto other = tiny_synthetic(10);
    CHECK((stream.task(2).train_features(5) - other.task(2).train_features(5)).norm() > 0.0);
}

TEST_CASE("tasks: synthetic class frequencies shape the label histogram") {
    SyntheticSpec spec;
    spec.num_tasks = 1;
    spec.dim = 4;
    spec.classes = 2;
    spec.examples_per_task = 2000;
    spec.class_freq = {0.9, 0.1};
    spec.seed = 21;
    const auto stream = build_synthetic_stream(spec);
    int zeros = 0;
    const auto& t = stream.task(0);
    for (int k = 0; k < t.train_size(); ++k) zeros += t.train_label(k) == 0 ? 1 : 0;
    const double frac = static_cast<double>(zeros) / t.train_size();
    CHECK(frac > 0.85);
    CHECK(frac < 0.95);

    SyntheticSpec bad = spec;
    bad.class_freq = {0.9};  // wrong arity
    CHECK_THROWS_AS(build_synthetic_stream(bad), ConfigError);
}

TEST_CASE("tasks: synthetic blob-image mode carries an image shape") {
    SyntheticSpec spec;
    spec.num_tasks = 2;
    spec.dim = 36;
    spec.classes = 2;
    spec.examples_per_task = 60;
    spec.image_shape = {{6, 6}};
    spec.seed = 3;
    const auto stream = build_synthetic_stream(spec);
    REQUIRE(stream.task(0).image_shape.has_value());
    CHECK((*stream.task(0).image_shape)[0] == 6);
    CHECK((*stream.task(0).image_shape)[1] == 6);
    CHECK(stream.task(0).feature_dim() == 36);
}

TEST_CASE("tasks: gather assembles batches in index order") {
    const auto stream = tiny_synthetic();
    const auto& t = stream.task(0);
    const std::vector<int> ks{4, 0, 7};
    const auto x = t.gather_train(ks);
    const auto y = t.gather_train_labels(ks);
    REQUIRE(x.rows() == 3);
    CHECK((x.row(0).transpose() - t.train_features(4)).norm() == 0.0);
    CHECK((x.row(1).transpose() - t.train_features(0)).norm() == 0.0);
    CHECK((x.row(2).transpose() - t.train_features(7)).norm() == 0.0);
    CHECK(y(0) == t.train_label(4));
    CHECK(y(2) == t.train_label(7));
}

TEST_CASE("tasks: example provenance separates train and test rows") {
    const auto stream = tiny_synthetic();
    const auto& t = stream.task(1);
    const Example e = t.train_example(3);
    CHECK(e.task_id == t.id);
    CHECK(e.source_index == t.train_source(3));
    CHECK(e.label == t.train_label(3));
    CHECK((e.x - t.train_features(3)).norm() == 0.0);

    // Test sources live above every train source.
    const int store_rows = static_cast<int>(t.train_store->features.rows());
    CHECK(t.test_source(0) >= store_rows);
}

TEST_CASE("tasks: single-task training learns a separable synthetic task") {
    const auto stream = tiny_synthetic(15, 1);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 10;
    cfg.hidden = {16};
    auto net = Mlp::make({6, 16, 3}, 1);
    const auto before = evaluate_task(net, stream.task(0));
    train_single_task(net, stream.task(0), cfg, 77);
    const auto after = evaluate_task(net, stream.task(0));
    CHECK(after.accuracy > before.accuracy);
    CHECK(after.accuracy > 0.8);

    // Deterministic: same seed twice gives bit-identical parameters.
    auto n1 = Mlp::make({6, 16, 3}, 1);
    auto n2 = Mlp::make({6, 16, 3}, 1);
    train_single_task(n1, stream.task(0), cfg, 77);
    train_single_task(n2, stream.task(0), cfg, 77);
    for (size_t l = 0; l < n1.layers.size(); ++l) {
        CHECK((n1.layers[l].w - n2.layers[l].w).norm() == 0.0);
        CHECK((n1.layers[l].b - n2.layers[l].b).norm() == 0.0);
    }
}

TEST_CASE("tasks: difficulty probe and zero-shot transfer are deterministic") {
    const auto stream = tiny_synthetic(8, 2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 10;
    cfg.hidden = {12};
    const double d1 = end_to_end_difficulty(stream.task(0), cfg, 5);
    const double d2 = end_to_end_difficulty(stream.task(0), cfg, 5);
    CHECK(d1 == d2);
    CHECK(d1 > 0.5);

    auto net = Mlp::make({6, 12, 3}, 2);
    train_single_task(net, stream.task(0), cfg, 5);
    const double z = zero_shot_transfer(net, stream.task(1));
    CHECK(z >= 0.0);
    CHECK(z <= 1.0);
    CHECK(z == zero_shot_transfer(net, stream.task(1)));
}

TEST_CASE("tasks: stream evaluation masks classes only for per-task heads") {
    auto store = std::make_shared<Dataset>();
    store->features = Eigen::MatrixXd::Random(40, 4);
    store->labels.assign(40, 0);
    for (int i = 0; i < 40; ++i) store->labels[static_cast<size_t>(i)] = i % 4;
    store->num_classes = 4;
    const auto split = build_split_stream(store, store, 2);

    Mlp zero;
    zero.layers.resize(1);
    zero.layers[0].w = Eigen::MatrixXd::Zero(4, 4);
    zero.layers[0].b = Eigen::VectorXd::Zero(4);
    // Per-task head: mask {2,3} predicts class 2 for every row of task 2.
    const auto masked = evaluate_on_stream_task(zero, split, 1);
    CHECK(masked.accuracy == doctest::Approx(0.5));

    const auto shared = build_permuted_stream(store, store, 1, {1});
    const auto open = evaluate_on_stream_task(zero, shared, 0);
    CHECK(open.accuracy == doctest::Approx(0.25));
}
