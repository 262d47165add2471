#include <numeric>
#include <set>

#include "doctest.h"
#include "gpsim/memory.hpp"

using namespace gpsim;

namespace {

// Task over a hand-built store: labels are scripted, features encode the row
// index so content equality is checkable from any angle.
Task make_labeled_task(int id, const std::vector<int>& labels, int num_classes) {
    auto store = std::make_shared<Dataset>();
    const int n = static_cast<int>(labels.size());
    store->features.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        store->features(i, 0) = i;
        store->features(i, 1) = labels[static_cast<size_t>(i)];
    }
    store->labels = labels;
    store->num_classes = num_classes;

    Task t;
    t.id = id;
    t.train_store = store;
    t.test_store = store;
    t.train_rows.resize(static_cast<size_t>(n));
    std::iota(t.train_rows.begin(), t.train_rows.end(), 0);
    t.test_rows = {0};
    std::set<int> classes(labels.begin(), labels.end());
    t.class_ids.assign(classes.begin(), classes.end());
    return t;
}

std::vector<int> all_indices(const Task& t) {
    std::vector<int> ks(static_cast<size_t>(t.train_size()));
    std::iota(ks.begin(), ks.end(), 0);
    return ks;
}

// Feeds a whole task through one staging pass and finalizes it with ring
// size a.
void stage_and_finalize(MemoryBuffer& buf, const Task& t, int budget, FillPolicy policy,
                        uint64_t seed, int a, int new_task_count, SwitchingPlan& plan) {
    buf.begin_task(t, budget, policy, seed);
    const auto ks = all_indices(t);
    buf.observe(t, ks);
    buf.seal_staging();
    plan.points[t.id] = a;
    buf.rebuild_for_new_task(new_task_count, plan, seed_for(seed, "shrink"));
}

std::vector<int> sources_of(const std::vector<MemoryBuffer::Entry>& entries, int task_id,
                            char part = 0) {
    std::vector<int> out;
    for (const auto& e : entries) {
        if (e.task_id == task_id && (part == 0 || e.part == part)) out.push_back(e.source_index);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("memory: equal allocation gives the remainder to the lowest ids") {
    CHECK(equal_allocation(1000, 3) == std::vector<int>{334, 333, 333});
    CHECK(equal_allocation(1000, 4) == std::vector<int>{250, 250, 250, 250});
    CHECK(equal_allocation(10, 3) == std::vector<int>{4, 3, 3});
    CHECK(equal_allocation(12, 5) == std::vector<int>{3, 3, 2, 2, 2});
    CHECK(equal_allocation(2, 4) == std::vector<int>{1, 1, 0, 0});

    for (int cap : {1, 7, 40, 64, 1000}) {
        for (int count = 1; count <= 8; ++count) {
            const auto alloc = equal_allocation(cap, count);
            CHECK(std::accumulate(alloc.begin(), alloc.end(), 0) == std::min(cap, cap));
            for (size_t i = 1; i < alloc.size(); ++i) {
                CHECK(alloc[i - 1] >= alloc[i]);
                CHECK(alloc[i - 1] - alloc[i] <= 1);
            }
        }
    }
}

TEST_CASE("memory: ring caps split budget over classes, remainder low") {
    CHECK(ring_class_caps(4, {0, 1}) == std::map<int, int>{{0, 2}, {1, 2}});
    CHECK(ring_class_caps(2, {0, 1, 2}) == std::map<int, int>{{0, 1}, {1, 1}, {2, 0}});
    CHECK(ring_class_caps(7, {1, 5, 9}) == std::map<int, int>{{1, 3}, {5, 2}, {9, 2}});
    CHECK(ring_class_caps(100, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}).at(9) == 10);
}

TEST_CASE("memory: reservoir keeps everything under budget, in arrival order") {
    const Task t = make_labeled_task(1, {0, 1, 0, 1, 0}, 2);
    MemoryBuffer buf(8);
    SwitchingPlan plan;
    stage_and_finalize(buf, t, 8, FillPolicy::Reservoir, 5, 0, 1, plan);
    const auto& slot = buf.slots().at(1);
    REQUIRE(slot.res_size() == 5);
    CHECK(slot.ring_size() == 0);
    for (int i = 0; i < 5; ++i) {
        CHECK(slot.res_part[static_cast<size_t>(i)].source_index == i);
    }
    verify_buffer_invariants(buf, 1);
}

TEST_CASE("memory: reservoir marginal inclusion is budget over n") {
    // budget 2, 30-item stream, 20,000 trials: every item's inclusion
    // frequency within 4 sigma of 2/30.
    const int n = 30, budget = 2, trials = 20000;
    std::vector<int> labels(static_cast<size_t>(n), 0);
    const Task t = make_labeled_task(1, labels, 1);
    std::vector<int> hits(static_cast<size_t>(n), 0);
    for (int trial = 0; trial < trials; ++trial) {
        MemoryBuffer buf(budget);
        buf.begin_task(t, budget, FillPolicy::Reservoir, 1000 + static_cast<uint64_t>(trial));
        buf.observe(t, all_indices(t));
        for (const auto& e : buf.entries(true)) hits[static_cast<size_t>(e.source_index)]++;
    }
    const double p = static_cast<double>(budget) / n;
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    for (int h : hits) {
        CHECK(std::abs(static_cast<double>(h) / trials - p) < 4.0 * sigma);
    }
}

TEST_CASE("memory: ring keeps the newest per class") {
    // budget 4, 2 classes, alternating stream of 10: last 2 of each kept.
    const Task t = make_labeled_task(1, {0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, 2);
    MemoryBuffer buf(4);
    SwitchingPlan plan;
    stage_and_finalize(buf, t, 4, FillPolicy::RingFull, 3, 4, 1, plan);
    const auto& slot = buf.slots().at(1);
    CHECK(slot.res_size() == 0);
    REQUIRE(slot.ring_size() == 4);
    CHECK(sources_of(buf.entries(), 1, 'g') == std::vector<int>{6, 7, 8, 9});

    // Class FIFO of size 3 receiving 5 pushes holds exactly the last 3, in order.
    const Task t2 = make_labeled_task(2, {0, 0, 0, 0, 0, 1, 1, 1}, 2);
    MemoryBuffer buf2(6);
    buf2.begin_task(t2, 6, FillPolicy::RingFull, 4);
    buf2.observe(t2, all_indices(t2));
    buf2.seal_staging();
    SwitchingPlan plan2;
    plan2.points[2] = 6;
    buf2.rebuild_for_new_task(1, plan2, 9);
    const auto& q = buf2.slots().at(2).ring_part.at(0);
    REQUIRE(q.size() == 3);
    CHECK(q[0].source_index == 2);
    CHECK(q[1].source_index == 3);
    CHECK(q[2].source_index == 4);
    verify_buffer_invariants(buf2, 1);
}

TEST_CASE("memory: ring rejects undeclared classes, skips zero caps") {
    const Task t = make_labeled_task(1, {0, 1, 2}, 3);
    MemoryBuffer buf(2);
    buf.begin_task(t, 2, FillPolicy::RingFull, 7);
    buf.observe(t, all_indices(t));  // caps {1,1,0}: class 2 dropped silently
    const auto entries = buf.entries(true);
    CHECK(entries.size() == 2);
    for (const auto& e : entries) CHECK(e.class_id != 2);

    // A label outside the declared set is a contract violation.
    Task lying = make_labeled_task(2, {0, 1, 1}, 2);
    lying.class_ids = {0};  // declares fewer classes than the stream carries
    MemoryBuffer buf2(4);
    buf2.begin_task(lying, 4, FillPolicy::RingFull, 7);
    const std::vector<int> bad{1};
    CHECK_THROWS_AS(buf2.observe(lying, bad), ContractError);
}

TEST_CASE("memory: boundary plans reproduce the pure policies") {
    // Mixed staging finalized at a = 0 equals pure reservoir under the same
    // seed; finalized at a = budget equals pure ring-full.
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) labels.push_back(i % 3);
    const Task t1 = make_labeled_task(1, labels, 3);
    const Task t2 = make_labeled_task(2, labels, 3);
    const uint64_t seed = 99;

    for (int a_max : {0, 1}) {
        MemoryBuffer pure(12), mixed(12);
        SwitchingPlan plan_pure, plan_mixed;
        const FillPolicy base = a_max ? FillPolicy::RingFull : FillPolicy::Reservoir;
        const int a1 = a_max ? 12 : 0;
        stage_and_finalize(pure, t1, 12, base, seed, a1, 1, plan_pure);
        stage_and_finalize(mixed, t1, 12, FillPolicy::Mixed, seed, a1, 1, plan_mixed);
        CHECK(pure.entries() == mixed.entries());

        const int a2 = a_max ? 6 : 0;
        stage_and_finalize(pure, t2, 6, base, seed + 1, a2, 2, plan_pure);
        stage_and_finalize(mixed, t2, 6, FillPolicy::Mixed, seed + 1, a2, 2, plan_mixed);
        CHECK(pure.entries() == mixed.entries());
        verify_buffer_invariants(pure, 2);
        verify_buffer_invariants(mixed, 2);
    }
}

TEST_CASE("memory: rebuild shrinks reservoir parts before ring parts") {
    // Slot of res 150 / ring 100 shrunk to budget 125: ring untouched.
    std::vector<int> labels;
    for (int i = 0; i < 400; ++i) labels.push_back(i % 4);
    const Task t1 = make_labeled_task(1, labels, 4);
    MemoryBuffer buf(250);
    SwitchingPlan plan;
    stage_and_finalize(buf, t1, 250, FillPolicy::Mixed, 17, 100, 1, plan);
    {
        const auto& slot = buf.slots().at(1);
        CHECK(slot.res_budget == 150);
        CHECK(slot.ring_budget == 100);
        CHECK(slot.res_size() == 150);
        CHECK(slot.ring_size() == 100);
    }
    const auto before = buf.entries();

    const Task t2 = make_labeled_task(2, labels, 4);
    stage_and_finalize(buf, t2, 125, FillPolicy::Mixed, 18, 0, 2, plan);
    {
        const auto& slot = buf.slots().at(1);
        CHECK(slot.slot_budget() == 125);
        CHECK(slot.ring_size() == 100);  // res shrank 150 -> 25 first
        CHECK(slot.res_size() == 25);
    }
    verify_buffer_invariants(buf, 2);

    // Monotone shrink: every surviving entry existed before.
    const auto after = buf.entries();
    const std::set<MemoryBuffer::Entry> old_set(before.begin(), before.end());
    for (const auto& e : after) {
        if (e.task_id == 1) CHECK(old_set.count(e) == 1);
    }
}

TEST_CASE("memory: ring shrink evicts oldest, class-balanced") {
    // res 0 / ring 100 with 10 classes shrunk to 50: 5 per class, newest kept.
    std::vector<int> labels;
    for (int i = 0; i < 300; ++i) labels.push_back(i % 10);
    const Task t1 = make_labeled_task(1, labels, 10);
    MemoryBuffer buf(100);
    SwitchingPlan plan;
    stage_and_finalize(buf, t1, 100, FillPolicy::RingFull, 23, 100, 1, plan);
    CHECK(buf.slots().at(1).ring_size() == 100);

    const Task t2 = make_labeled_task(2, labels, 10);
    stage_and_finalize(buf, t2, 50, FillPolicy::RingFull, 24, 50, 2, plan);
    const auto& slot = buf.slots().at(1);
    CHECK(slot.ring_size() == 50);
    CHECK(slot.res_size() == 0);
    for (int c = 0; c < 10; ++c) {
        const auto& q = slot.ring_part.at(c);
        REQUIRE(q.size() == 5);
        // The newest five of class c in a 300-item stream are rows 250+c..290+c.
        for (int k = 0; k < 5; ++k) {
            CHECK(q[static_cast<size_t>(k)].source_index == 250 + c + 10 * k);
        }
    }
    verify_buffer_invariants(buf, 2);
}

TEST_CASE("memory: rebuild demands a plan entry for every task") {
    const Task t1 = make_labeled_task(1, {0, 1, 0, 1}, 2);
    MemoryBuffer buf(4);
    buf.begin_task(t1, 4, FillPolicy::Mixed, 3);
    buf.observe(t1, all_indices(t1));
    buf.seal_staging();
    SwitchingPlan empty;
    CHECK_THROWS_AS(buf.rebuild_for_new_task(1, empty, 5), ContractError);

    SwitchingPlan out_of_range;
    out_of_range.points[1] = 99;  // beyond the staging budget
    CHECK_THROWS_AS(buf.rebuild_for_new_task(1, out_of_range, 5), ContractError);

    SwitchingPlan ok;
    ok.points[1] = 2;
    buf.rebuild_for_new_task(1, ok, 5);
    CHECK(buf.slots().at(1).ring_budget == 2);
    CHECK(buf.slots().at(1).res_budget == 2);
}

TEST_CASE("memory: hybrid switches on scarcity and stays switched") {
    // Single-class tasks with distinct classes make the trigger exact: the
    // boundary after task 3 must shrink task 2's slot from two copies of its
    // class to one.
    MemoryBuffer buf(4);
    SwitchingPlan plan;
    const Task t1 = make_labeled_task(1, {0, 0, 0, 0}, 3);
    stage_and_finalize(buf, t1, 4, FillPolicy::Hybrid, 11, 0, 1, plan);
    CHECK_FALSE(buf.hybrid_switched());

    const Task t2 = make_labeled_task(2, {1, 1}, 3);
    stage_and_finalize(buf, t2, 2, FillPolicy::Hybrid, 12, 0, 2, plan);
    CHECK_FALSE(buf.hybrid_switched());  // counts fell 4->2 and landed at 2

    const Task t3 = make_labeled_task(3, {2}, 3);
    stage_and_finalize(buf, t3, 1, FillPolicy::Hybrid, 13, 0, 3, plan);
    CHECK(buf.hybrid_switched());  // task 2's slot went 2 -> 1
    verify_buffer_invariants(buf, 3);

    // Once switched, hybrid staging admits straight into the ring part.
    const Task t4 = make_labeled_task(4, {0, 1, 0, 1}, 3);
    buf.begin_task(t4, 1, FillPolicy::Hybrid, 14);
    buf.observe(t4, all_indices(t4));
    for (const auto& e : buf.entries(true)) {
        if (e.task_id == 4) CHECK(e.part == 'g');
    }
    CHECK(buf.hybrid_switched());  // monotone
    buf.seal_staging();
    plan.points[4] = 1;
    buf.rebuild_for_new_task(4, plan, 15);
    CHECK(buf.hybrid_switched());
    verify_buffer_invariants(buf, 4);
}

TEST_CASE("memory: sample_batch draws uniformly from finalized content") {
    const Task t1 = make_labeled_task(1, {0, 1, 0, 1, 0, 1, 0, 1}, 2);
    MemoryBuffer buf(8);
    CHECK_FALSE(buf.replay_available());
    Rng rng(1);
    CHECK_FALSE(buf.sample_batch(4, rng).has_value());

    SwitchingPlan plan;
    stage_and_finalize(buf, t1, 8, FillPolicy::Mixed, 2, 4, 1, plan);
    CHECK(buf.replay_available());

    // Staged content of an open task never leaks into a sampled batch.
    const Task t2 = make_labeled_task(2, {0, 1}, 2);
    buf.begin_task(t2, 4, FillPolicy::Mixed, 3);
    buf.observe(t2, all_indices(t2));
    Rng r2(7);
    const auto batch = buf.sample_batch(64, r2);
    REQUIRE(batch.has_value());
    CHECK(batch->rows() == 64);
    for (int id : batch->task_ids) CHECK(id == 1);

    // Determinism: same generator state, same batch.
    Rng a(5), b(5);
    const auto ba = buf.sample_batch(16, a);
    const auto bb = buf.sample_batch(16, b);
    CHECK((ba->x - bb->x).norm() == 0.0);
    CHECK(ba->y == bb->y);

    // Empirical uniformity over the 8 stored examples, 4 sigma.
    Rng u(99);
    std::map<double, int> freq;  // keyed by the row-index feature
    const int draws = 100000;
    for (int i = 0; i < draws / 100; ++i) {
        const auto bt = buf.sample_batch(100, u);
        for (int r = 0; r < bt->rows(); ++r) freq[bt->x(r, 0)]++;
    }
    const double p = 1.0 / 8.0;
    const double sigma = std::sqrt(p * (1.0 - p) / draws);
    REQUIRE(freq.size() == 8);
    for (const auto& [row, count] : freq) {
        CHECK(std::abs(static_cast<double>(count) / draws - p) < 4.0 * sigma);
    }

    // A buffer holding one example returns it for every row.
    MemoryBuffer one(1);
    const Task ts = make_labeled_task(5, {0}, 1);
    SwitchingPlan sp;
    stage_and_finalize(one, ts, 1, FillPolicy::Reservoir, 6, 0, 1, sp);
    Rng ro(3);
    const auto bo = one.sample_batch(4, ro);
    REQUIRE(bo.has_value());
    for (int r = 0; r < 4; ++r) CHECK(bo->x(r, 0) == 0.0);
}

TEST_CASE("memory: staging lifecycle contract violations") {
    const Task t1 = make_labeled_task(1, {0, 1}, 2);
    MemoryBuffer buf(4);
    const std::vector<int> ks{0};
    CHECK_THROWS_AS(buf.observe(t1, ks), ContractError);  // no staging open
    buf.begin_task(t1, 4, FillPolicy::Mixed, 1);
    CHECK_THROWS_AS(buf.begin_task(t1, 4, FillPolicy::Mixed, 1), ContractError);

    const Task other = make_labeled_task(9, {0}, 2);
    CHECK_THROWS_AS(buf.observe(other, ks), ContractError);  // wrong task

    SwitchingPlan plan;
    plan.points[1] = 0;
    CHECK_THROWS_AS(buf.rebuild_for_new_task(1, plan, 2), ContractError);  // not sealed
    buf.seal_staging();
    CHECK_THROWS_AS(buf.observe(t1, ks), ContractError);  // sealed
    buf.rebuild_for_new_task(1, plan, 2);

    // Curriculum entry points require curriculum policies and vice versa.
    const Task t2 = make_labeled_task(2, {0, 1}, 2);
    buf.begin_task(t2, 2, FillPolicy::CurRes, 3);
    CHECK_THROWS_AS(buf.observe(t2, ks), ContractError);
    EasyPool pool;
    pool.gamma = 1.0;
    pool.ranked = {0, 1};
    pool.members = {0, 1};
    buf.observe_curriculum(t2, ks, 1, 2, pool);
    CHECK_THROWS_AS(buf.observe_curriculum(t2, ks, 3, 2, pool), ContractError);
}

TEST_CASE("memory: curriculum with gamma 1 behaves like the base policy") {
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(i % 2);
    const Task t = make_labeled_task(1, labels, 2);

    EasyPool whole;
    whole.gamma = 1.0;
    for (int i = 0; i < 40; ++i) {
        whole.ranked.push_back(i);
        whole.members.insert(i);
        whole.per_class[i % 2].push_back(i);
    }

    // Early-epoch admissions and late-epoch admissions with the whole-set
    // pool are the same rule; identical seeds give identical buffers.
    MemoryBuffer early(8), late(8);
    early.begin_task(t, 8, FillPolicy::CurRes, 42);
    late.begin_task(t, 8, FillPolicy::CurRes, 42);
    const auto ks = all_indices(t);
    early.observe_curriculum(t, ks, 1, 2, whole);  // epoch 1 of 2: early half
    late.observe_curriculum(t, ks, 2, 2, whole);   // epoch 2 of 2: late half
    CHECK(early.entries(true) == late.entries(true));

    // Replacement with the whole-set pool is a no-op.
    const auto before = late.entries(true);
    late.apply_curriculum_replacement(t, whole);
    CHECK(late.entries(true) == before);
}

TEST_CASE("memory: curriculum replacement lands inside the easy pool") {
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(i % 2);
    const Task t = make_labeled_task(1, labels, 2);

    // Pool = sources 10..29; enough spare members to cover both staged parts.
    EasyPool pool;
    pool.gamma = 0.66;
    for (int i = 10; i < 30; ++i) {
        pool.ranked.push_back(i);
        pool.members.insert(i);
        pool.per_class[i % 2].push_back(i);
    }

    MemoryBuffer buf(6);
    buf.begin_task(t, 6, FillPolicy::CurMixed, 7);
    buf.observe_curriculum(t, all_indices(t), 1, 2, pool);
    buf.apply_curriculum_replacement(t, pool);
    for (const auto& e : buf.entries(true)) {
        CHECK(pool.members.count(e.source_index) == 1);
    }

    // Hand-traceable extreme: residents disjoint from a pool of exactly the
    // staging size leave the final content equal to the pool.
    const Task t6 = make_labeled_task(2, {0, 0, 0, 1, 1, 1, 0, 1}, 2);
    EasyPool exact;
    exact.gamma = 0.75;
    for (int i : {2, 3, 4, 5, 6, 7}) {
        exact.ranked.push_back(i);
        exact.members.insert(i);
        exact.per_class[t6.train_label(i)].push_back(i);
    }
    MemoryBuffer small(6);
    small.begin_task(t6, 6, FillPolicy::CurRes, 1);
    const std::vector<int> first_two{0, 1};
    small.observe_curriculum(t6, first_two, 1, 2, exact);  // residents 0 and 1
    CHECK(sources_of(small.entries(true), 2) == std::vector<int>{0, 1});
    small.apply_curriculum_replacement(t6, exact);
    for (const auto& e : small.entries(true)) {
        CHECK(exact.members.count(e.source_index) == 1);
    }
}

TEST_CASE("memory: curriculum rank orders by learned epoch then loss") {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<CurriculumStat> stats{
        {0, 3.0, 0.1}, {1, 2.0, 0.3}, {2, inf, 0.05}, {3, 2.0, 0.2}, {4, 1.0, 9.0},
    };
    CHECK(implicit_curriculum_rank(stats) == std::vector<int>{4, 3, 1, 0, 2});

    // All learned in epoch 1: pure ascending loss.
    std::vector<CurriculumStat> flat{{0, 1.0, 0.5}, {1, 1.0, 0.1}, {2, 1.0, 0.3}};
    CHECK(implicit_curriculum_rank(flat) == std::vector<int>{1, 2, 0});

    // Matches a naive stable sort on random attribute sets.
    Rng r(8);
    std::vector<CurriculumStat> random_stats;
    for (int i = 0; i < 200; ++i) {
        const double e = r.below(3) == 0 ? inf : static_cast<double>(r.below(4));
        random_stats.push_back({i, e, std::round(r.uniform() * 10.0) / 10.0});
    }
    auto naive = random_stats;
    std::stable_sort(naive.begin(), naive.end(), [](const auto& a, const auto& b) {
        if (a.learned_epoch != b.learned_epoch) return a.learned_epoch < b.learned_epoch;
        return a.loss < b.loss;
    });
    std::vector<int> expect;
    for (const auto& s : naive) expect.push_back(s.source_index);
    CHECK(implicit_curriculum_rank(random_stats) == expect);
}

TEST_CASE("memory: switching plan serializes and restores") {
    SwitchingPlan plan;
    plan.provenance = SwitchingPlan::Provenance::Simulated;
    plan.points = {{1, 0}, {2, 57}, {3, 200}};
    const auto j = plan.to_json();
    CHECK(j.at("provenance") == "simulated");
    const auto back = SwitchingPlan::from_json(j);
    CHECK(back.points == plan.points);
    CHECK(back.provenance == plan.provenance);

    SwitchingPlan oracle;
    oracle.provenance = SwitchingPlan::Provenance::Oracle;
    CHECK(SwitchingPlan::from_json(oracle.to_json()).provenance ==
          SwitchingPlan::Provenance::Oracle);
    CHECK_THROWS_AS(SwitchingPlan::from_json(nlohmann::json{{"provenance", "bogus"},
                                                            {"points", nlohmann::json::object()}}),
                    ConfigError);
}

TEST_CASE("memory: snapshot lists every stored example with provenance") {
    const Task t = make_labeled_task(1, {0, 1, 0, 1}, 2);
    MemoryBuffer buf(4);
    SwitchingPlan plan;
    stage_and_finalize(buf, t, 4, FillPolicy::Mixed, 5, 2, 1, plan);
    const auto snap = buf.snapshot();
    CHECK(snap.at("capacity") == 4);
    CHECK(snap.at("staging_open") == false);
    CHECK(snap.at("hybrid_switched") == false);
    int listed = 0;
    for (const auto& slot : snap.at("slots")) {
        CHECK(slot.contains("task_id"));
        CHECK(slot.at("res_budget").get<int>() + slot.at("ring_budget").get<int>() ==
              equal_allocation(4, 1)[0]);
        for (const auto& e : slot.at("res")) {
            CHECK(e.contains("class_id"));
            CHECK(e.contains("source_index"));
            listed++;
        }
        for (const auto& [cls, sources] : slot.at("ring").items()) {
            listed += static_cast<int>(sources.size());
        }
    }
    CHECK(listed == buf.finalized_total());
}

TEST_CASE("memory: randomized runs hold every invariant at every boundary") {
    // Smaller sibling of the full acceptance sweep: random policies, random
    // plans, invariants after every rebuild.
    Rng meta(2718);
    const FillPolicy policies[] = {FillPolicy::Reservoir, FillPolicy::RingFull,
                                   FillPolicy::Hybrid, FillPolicy::Mixed};
    for (int run = 0; run < 60; ++run) {
        const int capacity = 4 + static_cast<int>(meta.below(29));
        const int tasks = 2 + static_cast<int>(meta.below(4));
        const int classes = 2 + static_cast<int>(meta.below(3));
        MemoryBuffer buf(capacity);
        SwitchingPlan plan;
        for (int i = 1; i <= tasks; ++i) {
            const int n = 20 + static_cast<int>(meta.below(40));
            std::vector<int> labels;
            for (int k = 0; k < n; ++k) labels.push_back(static_cast<int>(meta.below(classes)));
            const Task t = make_labeled_task(i, labels, classes);
            const int budget = capacity / i;
            const FillPolicy policy = policies[meta.below(4)];
            buf.begin_task(t, budget, policy, meta.next());
            buf.observe(t, all_indices(t));
            buf.seal_staging();
            plan.points[i] = static_cast<int>(meta.below(static_cast<uint64_t>(budget) + 1));
            buf.rebuild_for_new_task(i, plan, meta.next());
            verify_buffer_invariants(buf, i);
        }
    }
}
