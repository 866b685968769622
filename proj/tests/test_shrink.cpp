#include <gtest/gtest.h>

#include "anglenas/shrink.hpp"

#include <set>

using namespace anglenas;

namespace {

const std::vector<OpMenuItem> kToyMenu{{OpKind::parametric}, {OpKind::identity},
                                       {OpKind::pooling, 2}};

ShrinkConfig fast_cfg() {
    ShrinkConfig cfg;
    cfg.train.first_stage_epochs = 2;
    cfg.train.later_stage_epochs = 1;
    cfg.train.batch_size = 16;
    cfg.samples_per_op = 20;
    return cfg;
}

ChildModel whole(const SupernetGraph& g, std::uint32_t slot = 0) {
    return {&g, std::vector<std::uint32_t>(g.edge_count(), slot)};
}

} // namespace

TEST(Shrink, ScoreOfDegenerateSpaceEqualsTheSingleAngle) {
    // one-operator space: every child containing the op is the same child
    const auto g = make_chain(2, 4, {{OpKind::parametric}});
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 1);
    for (auto& v : store.entry({0, 0}).weight.value.data) v += 0.5;
    const double expected = angle_of_child(whole(g), store, WeightSource::base);
    Rng rng(2);
    const OperatorScore s = score_operator({0, 0}, g, store, 10, rng, fast_cfg());
    EXPECT_DOUBLE_EQ(s.mean, expected);
    EXPECT_DOUBLE_EQ(s.stddev, 0.0);
    EXPECT_EQ(s.samples, 1u); // exhaustive path: one distinct child
}

TEST(Shrink, UntrainedStoreScoresZeroEverywhere) {
    const auto g = make_complete_cell(4, 4, kToyMenu);
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 3);
    Rng rng(4);
    for (const auto id : g.all_operator_ids()) {
        Rng op_rng(Rng::mix(9, id.edge * 8 + id.slot));
        const OperatorScore s = score_operator(id, g, store, 10, op_rng, fast_cfg());
        EXPECT_EQ(s.mean, 0.0);
        EXPECT_EQ(s.stddev, 0.0);
    }
}

// 2-edge x 2-op space: the score of an operator with the sample budget
// covering all children containing it equals the arithmetic mean of the two
// exhaustively computed angles.
TEST(Shrink, ScoreMatchesExhaustiveMean) {
    const auto g = make_chain(3, 4, {{OpKind::parametric}, {OpKind::parametric}});
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 5);
    Rng drift(6);
    for (auto& [id, e] : store.ops)
        for (auto& v : e.weight.value.data) v += 0.3 * drift.normal();
    // children containing (0,0): choice on edge 1 in {0,1}
    ChildModel c0 = whole(g);
    ChildModel c1 = whole(g);
    c1.choice[1] = 1;
    const double a0 = angle_of_child(c0, store, WeightSource::base);
    const double a1 = angle_of_child(c1, store, WeightSource::base);
    Rng rng(7);
    const OperatorScore s = score_operator({0, 0}, g, store, 2, rng, fast_cfg());
    EXPECT_EQ(s.samples, 2u);
    EXPECT_NEAR(s.mean, (a0 + a1) / 2.0, 1e-15);
}

TEST(Shrink, SelectRemovalsFollowsScoresWithConnectivity) {
    // one edge with three candidates scored {0.1, 0.2, 0.3}, k=2: the two
    // lowest go, the best survives as sole operator
    const auto g = make_chain(2, 4, {{OpKind::parametric}, {OpKind::parametric}, {OpKind::parametric}});
    std::vector<OperatorScore> scores{{{0, 0}, 0.1, 0.0, 1}, {{0, 1}, 0.2, 0.0, 1},
                                      {{0, 2}, 0.3, 0.0, 1}};
    const auto removed = select_removals(g, scores, 2);
    ASSERT_EQ(removed.size(), 2u);
    EXPECT_EQ(removed[0], (OperatorId{0, 0}));
    EXPECT_EQ(removed[1], (OperatorId{0, 1}));
}

TEST(Shrink, SelectRemovalsBreaksTiesByOperatorId) {
    const auto g = make_chain(3, 4, {{OpKind::parametric}, {OpKind::parametric}});
    std::vector<OperatorScore> scores{{{1, 1}, 0.5, 0.0, 1},
                                      {{1, 0}, 0.5, 0.0, 1},
                                      {{0, 1}, 0.5, 0.0, 1},
                                      {{0, 0}, 0.5, 0.0, 1}};
    const auto removed = select_removals(g, scores, 2);
    ASSERT_EQ(removed.size(), 2u);
    EXPECT_EQ(removed[0], (OperatorId{0, 0}));
    EXPECT_EQ(removed[1], (OperatorId{1, 0}));
}

TEST(Shrink, RemovalNeverDisconnectsTheSpace) {
    // edge 1 holds {param, none}: dropping its param would leave only
    // "none" there, cutting every valid child
    SupernetGraph g({"a", "b", "c"},
                    {{0, 1, make_op_list({{OpKind::parametric}, {OpKind::parametric}}, 0, 4)},
                     {1, 2, make_op_list({{OpKind::parametric}, {OpKind::none}}, 1, 4)}},
                    4, 2, 4);
    std::vector<OperatorScore> scores{{{1, 0}, 0.01, 0.0, 1}, // lowest but load-bearing
                                      {{0, 0}, 0.2, 0.0, 1},
                                      {{0, 1}, 0.3, 0.0, 1},
                                      {{1, 1}, 0.4, 0.0, 1}};
    const auto removed = select_removals(g, scores, 2);
    ASSERT_EQ(removed.size(), 2u);
    EXPECT_EQ(removed[0], (OperatorId{0, 0}));
    EXPECT_EQ(removed[1], (OperatorId{1, 1}));
}

TEST(Shrink, StepOnAllSoleSurvivorsThrows) {
    const auto g = make_chain(3, 4, {{OpKind::parametric}});
    const DataBundle data = make_rings({32, 16, 4, 0.1, 8});
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 9);
    ShrinkState state(g);
    EXPECT_THROW(shrink_step(state, store, fast_cfg(), data, 1), NoRemovableOperator);
}

TEST(Shrink, ShortfallIsRecordedWhenKExceedsRemovable) {
    SupernetGraph g({"a", "b", "c"},
                    {{0, 1, make_op_list({{OpKind::parametric}, {OpKind::parametric}}, 0, 4)},
                     {1, 2, make_op_list({{OpKind::parametric}}, 1, 4)}},
                    4, 2, 4);
    const DataBundle data = make_rings({32, 16, 4, 0.1, 10});
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 11);
    ShrinkConfig cfg = fast_cfg();
    cfg.drop_per_iter = 3;
    ShrinkState state(g);
    shrink_step(state, store, cfg, data, 1);
    ASSERT_EQ(state.log.size(), 1u);
    EXPECT_EQ(state.log[0].removed.size(), 1u);
    EXPECT_EQ(state.log[0].shortfall, 2u);
}

TEST(Shrink, RunAbsStopsImmediatelyWhenThresholdCoversSpace) {
    const auto g = make_complete_cell(4, 4, kToyMenu);
    const DataBundle data = make_rings({32, 16, 4, 0.1, 12});
    ShrinkConfig cfg = fast_cfg();
    cfg.threshold = space_size(g);
    const ShrinkState state = run_abs(g, cfg, data, 1);
    EXPECT_TRUE(state.finished);
    EXPECT_TRUE(state.log.empty());
    EXPECT_EQ(state.space.hash(), g.hash());
}

TEST(Shrink, SingleEdgeSpaceShrinksToOneOperator) {
    const auto g = make_chain(2, 4, {{OpKind::parametric}, {OpKind::parametric}, {OpKind::parametric}});
    const DataBundle data = make_rings({32, 16, 4, 0.1, 13});
    ShrinkConfig cfg = fast_cfg();
    cfg.threshold = 1;
    cfg.drop_per_iter = 1;
    const ShrinkState state = run_abs(g, cfg, data, 2);
    EXPECT_EQ(space_size(state.space), 1u);
    EXPECT_EQ(state.removed_total, 2u);
}

TEST(Shrink, ReplayIsBitIdentical) {
    const auto g = make_complete_cell(4, 4, kToyMenu);
    const DataBundle data = make_rings({64, 32, 4, 0.1, 14});
    ShrinkConfig cfg = fast_cfg();
    cfg.threshold = 100;
    cfg.drop_per_iter = 2;
    const ShrinkState a = run_abs(g, cfg, data, 33);
    const ShrinkState b = run_abs(g, cfg, data, 33);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i)
        EXPECT_EQ(iteration_to_json(a.log[i]), iteration_to_json(b.log[i]));
    const ShrinkState c = run_abs(g, cfg, data, 34);
    bool any_diff = c.log.size() != a.log.size();
    for (std::size_t i = 0; !any_diff && i < a.log.size(); ++i)
        any_diff = iteration_to_json(a.log[i]) != iteration_to_json(c.log[i]);
    EXPECT_TRUE(any_diff) << "different seeds reproduced the identical run";
}

TEST(Shrink, InvariantsHoldAcrossSeededRuns) {
    const auto g = make_complete_cell(4, 4, kToyMenu);
    const DataBundle data = make_rings({64, 32, 4, 0.1, 15});
    ShrinkConfig cfg = fast_cfg();
    cfg.threshold = 50;
    cfg.drop_per_iter = 2;
    cfg.reset_after = 5;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const ShrinkState state = run_abs(g, cfg, data, seed);
        EXPECT_LE(space_size(state.space), 50u);
        std::uint64_t prev_size = space_size(g);
        std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
        SupernetGraph current = g;
        for (const auto& rec : state.log) {
            EXPECT_LT(rec.size_after, prev_size); // strictly decreasing
            prev_size = rec.size_after;
            for (const auto id : rec.removed) {
                const bool fresh = seen.insert({id.edge, id.slot}).second;
                EXPECT_TRUE(fresh) << "operator removed twice";
            }
            current = current.without_operators(rec.removed);
            for (const auto& e : current.edges()) EXPECT_GE(e.ops.size(), 1u);
            // a fully connected non-none child still exists
            Rng rng(99);
            EXPECT_NO_THROW(sample_child(current, rng));
        }
        EXPECT_EQ(current.hash(), state.space.hash());
        EXPECT_EQ(seen.size(), state.removed_total);
    }
}

TEST(Shrink, BaseResetTriggersAfterEnoughRemovals) {
    const auto g = make_complete_cell(4, 4, kToyMenu);
    const DataBundle data = make_rings({64, 32, 4, 0.1, 16});
    ShrinkConfig cfg = fast_cfg();
    cfg.threshold = 1;
    cfg.drop_per_iter = 3;
    cfg.reset_after = 4;
    WeightStore store;
    const ShrinkState state = run_abs(g, cfg, data, 4, &store);
    bool any_reset = false;
    std::uint32_t since_reset = 0;
    for (const auto& rec : state.log) {
        since_reset += std::uint32_t(rec.removed.size());
        if (rec.base_reset) {
            EXPECT_GT(since_reset, cfg.reset_after);
            since_reset = 0;
            any_reset = true;
        }
    }
    EXPECT_TRUE(any_reset);
    EXPECT_FALSE(store.reset_log.empty());
}

TEST(Shrink, ParamBandFilterConstrainsSampledChildren) {
    const auto g = make_complete_cell(4, 4, kToyMenu);
    ShrinkConfig cfg = fast_cfg();
    const std::uint64_t op_params = 16; // 4x4 weight
    cfg.param_band = {{2 * op_params, 4 * op_params}};
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 17);
    Rng rng(18);
    for (int i = 0; i < 50; ++i) {
        const ChildModel child = detail::sample_scored_child(g, rng, {0, 0}, cfg);
        const std::uint64_t p = child_param_count(child);
        EXPECT_GE(p, cfg.param_band->first);
        EXPECT_LE(p, cfg.param_band->second);
        EXPECT_EQ(child.choice[0], 0u);
    }
}

TEST(Shrink, GroundTruthMetricUsesStaticScores) {
    const auto g = make_chain(3, 4, {{OpKind::parametric}, {OpKind::parametric}});
    GroundTruthTable table;
    table.space_hash = g.hash();
    // accuracies chosen so (0,1) and (1,1) rank lowest
    table.records = {{{0, 0}, 0.9, 1}, {{0, 1}, 0.8, 2}, {{1, 0}, 0.7, 3}, {{1, 1}, 0.1, 4}};
    std::sort(table.records.begin(), table.records.end(),
              [](const ChildRecord& a, const ChildRecord& b) { return a.encoding < b.encoding; });
    const OperatorScore s = score_operator_ground_truth({0, 1}, table);
    EXPECT_NEAR(s.mean, (0.7 + 0.1) / 2.0, 1e-15);
    EXPECT_EQ(s.samples, 2u);
}

TEST(Shrink, LogSerializationRoundTrips) {
    const auto g = make_complete_cell(4, 4, kToyMenu);
    const DataBundle data = make_rings({64, 32, 4, 0.1, 19});
    ShrinkConfig cfg = fast_cfg();
    cfg.threshold = 200;
    const ShrinkState state = run_abs(g, cfg, data, 21);
    const auto path = std::filesystem::temp_directory_path() / "anglenas_shrinklog_test.jsonl";
    save_shrink_log(state, path, 0xabcdULL, 21);
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        if (lines == 0) {
            EXPECT_EQ(j["schema"], "anglenas-shrinklog-v1");
            EXPECT_EQ(j["seed"], 21);
        } else {
            EXPECT_EQ(j["iteration"], lines - 1);
            EXPECT_EQ(j, iteration_to_json(state.log[lines - 1]));
        }
        ++lines;
    }
    EXPECT_EQ(lines, state.log.size() + 1);
    std::filesystem::remove(path);
}
