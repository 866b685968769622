#include <gtest/gtest.h>

#include "anglenas/angle.hpp"
#include "anglenas/supernet.hpp"

#include <numbers>
#include <set>

using namespace anglenas;

namespace {

ChildModel whole(const SupernetGraph& g, std::uint32_t slot = 0) {
    return {&g, std::vector<std::uint32_t>(g.edge_count(), slot)};
}

// chain with a parallel shortcut slot on the second half:
// e0: 0->1 {param}, e1: 1->2 {param}, e2: 1->2 {identity | none}
SupernetGraph shortcut_space(std::size_t width = 2) {
    return SupernetGraph({"a", "b", "c"},
                         {{0, 1, make_op_list({{OpKind::parametric}}, 0, width)},
                          {1, 2, make_op_list({{OpKind::parametric}}, 1, width)},
                          {1, 2, make_op_list({{OpKind::identity}, {OpKind::none}}, 2, width)}},
                         width, 2, 4);
}

} // namespace

// Children with identical learnable weights but different structure must get
// different vectors: the shortcut child repeats the segments of the paths the
// shortcut opens.
TEST(Angle, ShortcutChildDiffersFromSequentialChild) {
    const auto g = shortcut_space();
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 1);
    ChildModel with_shortcut = whole(g); // identity on e2
    ChildModel sequential = whole(g);
    sequential.choice[2] = 1; // none on e2
    const WeightVector v1 =
        build_weight_vector(with_shortcut, store, WeightSource::current);
    const WeightVector v2 = build_weight_vector(sequential, store, WeightSource::current);
    // sequential: one path [w0, w1] = 8 doubles; shortcut child adds the
    // path through the identity, repeating w0
    EXPECT_EQ(v2.values.size(), 8u);
    EXPECT_EQ(v1.values.size(), 12u);
    EXPECT_NE(v1.values, v2.values);
}

TEST(Angle, SingleEdgeVectorIsFlattenedWeight) {
    const auto g = make_chain(2, 3, {{OpKind::parametric}});
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 2);
    const WeightVector v = build_weight_vector(whole(g), store, WeightSource::current);
    EXPECT_EQ(v.values, store.entry({0, 0}).weight.value.data);
    ASSERT_EQ(v.provenance.size(), 1u);
    EXPECT_EQ(v.provenance[0].length, 9u);
    EXPECT_EQ(v.provenance[0].op, (OperatorId{0, 0}));
}

// Full 4-node cell, all parametric: vector length equals the sum over the 4
// enumerated paths of their operator sizes, checked against an independent
// path walk.
TEST(Angle, CompleteCellVectorLengthMatchesPathWalk) {
    const std::size_t width = 3;
    const auto g = make_complete_cell(4, width, {{OpKind::parametric}});
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 3);
    const ChildModel child = whole(g);
    const WeightVector v = build_weight_vector(child, store, WeightSource::current);
    // oracle: walk the paths independently and count weights
    std::size_t expected = 0;
    for (const auto& path : enumerate_paths(child))
        for (auto e : path) expected += child.op_on(e).weight_count();
    EXPECT_EQ(expected, std::size_t(8 * width * width)); // paths cover 8 operator slots
    EXPECT_EQ(v.values.size(), expected);
    // provenance spans are contiguous and non-overlapping
    std::size_t offset = 0;
    for (const auto& seg : v.provenance) {
        EXPECT_EQ(seg.offset, offset);
        offset += seg.length;
    }
    EXPECT_EQ(offset, v.values.size());
}

TEST(Angle, IdenticalWeightsGiveZeroAngle) {
    const auto g = make_complete_cell(4, 4, {{OpKind::parametric}, {OpKind::pooling, 2}});
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 4);
    Rng rng(1);
    for (int i = 0; i < 5; ++i)
        EXPECT_EQ(angle_of_child(sample_child(g, rng), store, WeightSource::init), 0.0);
}

TEST(Angle, OrthogonalVectorsGiveRightAngle) {
    SupernetGraph g({"a", "b"}, {{0, 1, {OperatorSpec{OpKind::parametric, 1, 2, 0, {0, 0}}}}},
                    2, 2, 4);
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 5);
    store.entry({0, 0}).weight.value.data = {1.0, 0.0};
    store.take_snapshots();
    store.entry({0, 0}).weight.value.data = {0.0, 1.0};
    EXPECT_DOUBLE_EQ(angle_of_child(whole(g), store, WeightSource::init),
                     std::numbers::pi / 2.0);
}

// reference (1,1,0) against current (1,0,1): cos = 1/2, angle = pi/3
TEST(Angle, HandComputedThreeVectorCase) {
    SupernetGraph g({"a", "b"}, {{0, 1, {OperatorSpec{OpKind::parametric, 1, 3, 0, {0, 0}}}}},
                    3, 2, 4);
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 6);
    store.entry({0, 0}).weight.value.data = {1.0, 1.0, 0.0};
    store.take_snapshots();
    store.entry({0, 0}).weight.value.data = {1.0, 0.0, 1.0};
    const double angle = angle_of_child(whole(g), store, WeightSource::init);
    EXPECT_NEAR(angle, std::acos(0.5), 1e-15);
    EXPECT_NEAR(angle, std::numbers::pi / 3.0, 1e-12);
}

TEST(Angle, InvariantUnderPositiveRescaling) {
    const auto g = make_complete_cell(4, 4,
                                      {{OpKind::parametric}, {OpKind::identity}, {OpKind::pooling, 2}});
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 7);
    // move the current weights off the snapshot
    Rng perturb(2);
    for (auto& [id, e] : store.ops)
        if (e.trainable)
            for (auto& v : e.weight.value.data) v += 0.3 * perturb.normal();
    Rng rng(3);
    for (double c : {0.1, 3.0, 100.0}) {
        WeightStore scaled = store;
        for (auto& [id, e] : scaled.ops)
            for (auto& v : e.weight.value.data) v *= c;
        for (int i = 0; i < 10; ++i) {
            Rng sample_rng(Rng::mix(11, i));
            const ChildModel child = sample_child(g, sample_rng);
            double a0 = 0.0, a1 = 0.0;
            bool zero_norm = false;
            try {
                a0 = angle_of_child(child, store, WeightSource::init);
                a1 = angle_of_child(child, scaled, WeightSource::init);
            } catch (const ZeroNormVector&) {
                zero_norm = true;
            }
            if (!zero_norm) {
                EXPECT_NEAR(a0, a1, 1e-9);
            }
        }
    }
}

// Enumerate every child pair of a 4-edge space with shared learnable weights:
// pairs with different edge sets must produce different vectors.
TEST(Angle, StructuralDiscriminationByEnumeration) {
    SupernetGraph g({"a", "b", "c"},
                    {{0, 1, make_op_list({{OpKind::parametric}}, 0, 2)},
                     {0, 1, make_op_list({{OpKind::identity}, {OpKind::none}}, 1, 2)},
                     {1, 2, make_op_list({{OpKind::parametric}}, 2, 2)},
                     {1, 2, make_op_list({{OpKind::pooling, 2}, {OpKind::none}}, 3, 2)}},
                    2, 2, 4);
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 8);
    std::vector<ChildModel> children;
    for (std::uint32_t s1 : {0u, 1u})
        for (std::uint32_t s3 : {0u, 1u}) {
            ChildModel c = whole(g);
            c.choice[1] = s1;
            c.choice[3] = s3;
            ASSERT_TRUE(c.is_valid());
            children.push_back(c);
        }
    for (std::size_t i = 0; i < children.size(); ++i)
        for (std::size_t j = i + 1; j < children.size(); ++j) {
            const auto vi =
                build_weight_vector(children[i], store, WeightSource::current).values;
            const auto vj =
                build_weight_vector(children[j], store, WeightSource::current).values;
            EXPECT_NE(vi, vj) << "children " << i << " and " << j;
        }
}

TEST(Angle, PoolingOnlyChildHasZeroAngle) {
    const auto g = make_chain(3, 4, {{OpKind::pooling, 2}, {OpKind::parametric}});
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 9);
    // drift the parametric weights; the pooling-only child must stay at zero
    for (auto& [id, e] : store.ops)
        if (e.trainable)
            for (auto& v : e.weight.value.data) v += 1.0;
    const ChildModel pooling_only = whole(g, 0);
    EXPECT_EQ(angle_of_child(pooling_only, store, WeightSource::init), 0.0);
    const ChildModel parametric = whole(g, 1);
    EXPECT_GT(angle_of_child(parametric, store, WeightSource::init), 0.0);
}

TEST(Angle, AllIdentityChildHasNoVector) {
    const auto g = make_chain(3, 4, {{OpKind::identity}, {OpKind::parametric}});
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 10);
    const ChildModel all_identity = whole(g, 0);
    EXPECT_THROW(build_weight_vector(all_identity, store, WeightSource::current), EmptyVector);
    EXPECT_THROW(angle_of_child(all_identity, store), ZeroNormVector);
}

TEST(Angle, TwoConstructionsAreIdentical) {
    const auto g = make_complete_cell(4, 4,
                                      {{OpKind::parametric}, {OpKind::identity}, {OpKind::pooling, 2}});
    const WeightStore store = init_supernet(g, InitPolicy::xavier_uniform, 11);
    Rng rng(12);
    const ChildModel child = sample_child(g, rng);
    const WeightVector a = build_weight_vector(child, store, WeightSource::current);
    const WeightVector b = build_weight_vector(child, store, WeightSource::current);
    EXPECT_EQ(a.values, b.values);
    ASSERT_EQ(a.provenance.size(), b.provenance.size());
    for (std::size_t i = 0; i < a.provenance.size(); ++i) {
        EXPECT_EQ(a.provenance[i].op, b.provenance[i].op);
        EXPECT_EQ(a.provenance[i].offset, b.provenance[i].offset);
        EXPECT_EQ(a.provenance[i].length, b.provenance[i].length);
    }
}

TEST(Angle, PathExplosionGuardDirectsToBlockMode) {
    const auto g = make_complete_cell(9, 2, {{OpKind::parametric}}); // 2^7 = 128 paths
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 13);
    try {
        build_weight_vector(whole(g), store, WeightSource::current, VectorMode::full_graph, 64);
        FAIL() << "expected PathExplosion";
    } catch (const PathExplosion& e) {
        EXPECT_NE(std::string(e.what()).find("block-wise"), std::string::npos);
    }
    // a larger cap admits the space again
    EXPECT_NO_THROW(
        build_weight_vector(whole(g), store, WeightSource::current, VectorMode::full_graph, 128));
}

TEST(Angle, BlockModeConcatenatesPerBlockVectors) {
    const auto chained = make_cell_chain(2, 3, 3, {{OpKind::parametric}});
    const WeightStore store = init_supernet(chained, InitPolicy::kaiming_normal, 14);
    const ChildModel child = whole(chained);
    const WeightVector blockwise =
        build_weight_vector(child, store, WeightSource::current, VectorMode::block_wise);
    // oracle: per block, paths are [direct] after [two-hop]; block entry ->
    // exit ordering mirrors the full-graph rule within the block
    std::vector<double> expected;
    for (const auto& block : chained.blocks()) {
        // edges per block: (b,b+1)=first, (b,b+2)=second, (b+1,b+2)=third
        const auto& w_first = store.entry(chained.edge(block[0]).ops[0].id).weight.value.data;
        const auto& w_mid = store.entry(chained.edge(block[2]).ops[0].id).weight.value.data;
        const auto& w_direct = store.entry(chained.edge(block[1]).ops[0].id).weight.value.data;
        expected.insert(expected.end(), w_first.begin(), w_first.end());
        expected.insert(expected.end(), w_mid.begin(), w_mid.end());
        expected.insert(expected.end(), w_direct.begin(), w_direct.end());
    }
    EXPECT_EQ(blockwise.values, expected);
    // full-graph mode on the same child multiplies paths across cells instead
    const WeightVector full =
        build_weight_vector(child, store, WeightSource::current, VectorMode::full_graph);
    EXPECT_GT(full.values.size(), blockwise.values.size());
}

TEST(Angle, BlockModeRequiresBlocks) {
    const auto g = make_chain(3, 4, {{OpKind::parametric}});
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 15);
    EXPECT_THROW(
        build_weight_vector(whole(g), store, WeightSource::current, VectorMode::block_wise),
        Error);
}

TEST(Angle, MonotoneAccumulationOverEarlyTraining) {
    const auto g = make_chain(2, 4, {{OpKind::parametric}});
    const DataBundle data = make_rings({64, 32, 4, 0.1, 19});
    WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 16);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.lr = 0.05;
    const ChildModel child = whole(g);
    double prev = angle_of_child(child, store, WeightSource::base);
    EXPECT_EQ(prev, 0.0);
    for (int e = 0; e < 5; ++e) {
        train_epoch(store, g, data.train, cfg);
        const double a = angle_of_child(child, store, WeightSource::base);
        EXPECT_GE(a, prev - 1e-9);
        prev = a;
    }
}
