// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. An optional argv[1] names the golden-file directory (replay logs
// are created there on the first run and must match bit-exactly afterwards).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "anglenas/anglenas.hpp"

using namespace anglenas;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << number << ". " << name;
    if (!detail.empty()) std::cout << " -- " << detail;
    std::cout << std::endl;
    if (!pass) ++g_failures;
}

void run(int number, const std::string& name,
         const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [pass, detail] = body();
        report(number, name, pass, detail);
    } catch (const std::exception& e) {
        report(number, name, false, std::string("exception: ") + e.what());
    }
}

const std::vector<OpMenuItem> kToyMenu{{OpKind::parametric}, {OpKind::identity},
                                       {OpKind::pooling, 2}};

struct ToyWorld {
    SupernetGraph space;
    DataBundle data;
    TrainConfig train;
    GroundTruthTable table;
};

// The 729-child toy benchmark shared by criteria 5-10. Built once.
ToyWorld& toy_world() {
    static ToyWorld* world = [] {
        auto* w = new ToyWorld{make_complete_cell(4, 8, kToyMenu),
                               make_rings({512, 512, 4, 0.12, 7}),
                               {},
                               {}};
        w->train.first_stage_epochs = 60;
        w->train.later_stage_epochs = 5;
        w->train.batch_size = 64;
        w->train.lr = 0.08;
        w->train.momentum = 0.9;
        BenchmarkConfig bench_cfg;
        bench_cfg.train = w->train;
        bench_cfg.train.first_stage_epochs = 40;
        bench_cfg.child_cap = 1000;
        const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
        w->table = generate_benchmark(w->space, bench_cfg, w->data, 12345, workers);
        return w;
    }();
    return *world;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// --- criteria ------------------------------------------------------------------

// 1. all child pairs of a 4-edge space with shared learnable weights but
// different edge sets produce distinct weight vectors, in under a second
std::pair<bool, std::string> structural_discrimination() {
    const auto t0 = std::chrono::steady_clock::now();
    SupernetGraph g({"a", "b", "c"},
                    {{0, 1, make_op_list({{OpKind::parametric}}, 0, 4)},
                     {0, 1, make_op_list({{OpKind::identity}, {OpKind::none}}, 1, 4)},
                     {1, 2, make_op_list({{OpKind::parametric}}, 2, 4)},
                     {1, 2, make_op_list({{OpKind::pooling, 2}, {OpKind::none}}, 3, 4)}},
                    4, 2, 4);
    const WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, 1);
    std::vector<ChildModel> children;
    for (std::uint32_t s1 : {0u, 1u})
        for (std::uint32_t s3 : {0u, 1u}) {
            ChildModel c{&g, {0, s1, 0, s3}};
            if (!c.is_valid()) return {false, "designed child is invalid"};
            children.push_back(c);
        }
    std::size_t pairs = 0, distinct = 0;
    for (std::size_t i = 0; i < children.size(); ++i)
        for (std::size_t j = i + 1; j < children.size(); ++j) {
            ++pairs;
            const auto vi = build_weight_vector(children[i], store, WeightSource::current);
            const auto vj = build_weight_vector(children[j], store, WeightSource::current);
            if (vi.values != vj.values) ++distinct;
        }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {distinct == pairs && secs < 1.0,
            std::to_string(distinct) + "/" + std::to_string(pairs) + " pairs distinct in " +
                fmt(secs) + "s"};
}

// 2. |angle(c*W) - angle(W)| < 1e-9 for c in {1e-3, 1, 1e3} on 100 children
std::pair<bool, std::string> scale_invariance() {
    ToyWorld& w = toy_world();
    WeightStore store = init_supernet(w.space, w.train.init, 99);
    TrainConfig cfg = w.train;
    cfg.first_stage_epochs = 10;
    for (std::size_t e = 0; e < cfg.first_stage_epochs; ++e)
        train_epoch(store, w.space, w.data.train, cfg, e, cfg.first_stage_epochs);
    Rng rng(4242);
    double worst = 0.0;
    int measured = 0;
    for (int i = 0; i < 100; ++i) {
        const ChildModel child = sample_child(w.space, rng);
        double base_angle = 0.0;
        try {
            base_angle = angle_of_child(child, store, WeightSource::init);
        } catch (const ZeroNormVector&) {
            continue; // no defined angle to compare
        }
        ++measured;
        for (double c : {1e-3, 1.0, 1e3}) {
            WeightStore scaled = store;
            for (auto& [id, entry] : scaled.ops)
                for (auto& v : entry.weight.value.data) v *= c;
            const double a = angle_of_child(child, scaled, WeightSource::init);
            worst = std::max(worst, std::abs(a - base_angle));
        }
    }
    return {worst < 1e-9 && measured > 50,
            "max |angle(cW)-angle(W)| = " + fmt(worst) + " over " + std::to_string(measured) +
                " children"};
}

// 3. kendalls_tau equals the O(n^2) pair-count oracle on 100 random pairs;
// identity -> 1, reversal -> -1
std::pair<bool, std::string> kendall_oracle() {
    Rng rng(31337);
    auto oracle = [](const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
        long long con = 0, dis = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = i + 1; j < a.size(); ++j) {
                const double d = (double(a[i]) - a[j]) * (double(b[i]) - b[j]);
                (d > 0 ? con : dis)++;
            }
        return double(con - dis) / (double(a.size()) * double(a.size() - 1) / 2.0);
    };
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng.uniform_index(49);
        std::vector<std::uint32_t> a(n), b(n);
        for (std::uint32_t i = 0; i < n; ++i) a[i] = b[i] = i;
        rng.shuffle(a);
        rng.shuffle(b);
        if (kendalls_tau(a, b) != oracle(a, b)) return {false, "oracle mismatch"};
        if (kendalls_tau(a, a) != 1.0) return {false, "identity != 1"};
        std::vector<std::uint32_t> rev(n);
        for (std::size_t i = 0; i < n; ++i) rev[i] = std::uint32_t(n - 1) - a[i];
        if (kendalls_tau(a, rev) != -1.0) return {false, "reversal != -1"};
    }
    return {true, "100 random pairs, n <= 50"};
}

// 4. path enumeration equals an exhaustive DFS oracle on 200 random DAGs
std::pair<bool, std::string> path_enumeration() {
    Rng rng(777);
    auto oracle_sequences = [](const ChildModel& child) {
        std::set<std::vector<std::uint32_t>> out;
        const auto& edges = child.space->edges();
        std::vector<std::uint32_t> stack{child.space->root()};
        std::function<void(std::uint32_t)> dfs = [&](std::uint32_t node) {
            if (node == child.space->leaf()) {
                out.insert(stack);
                return;
            }
            for (std::uint32_t e = 0; e < edges.size(); ++e) {
                if (edges[e].src != node) continue;
                stack.push_back(edges[e].dst);
                dfs(edges[e].dst);
                stack.pop_back();
            }
        };
        dfs(child.space->root());
        return out;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(7);
        std::vector<Edge> edges;
        auto ops = [&edges](std::uint32_t) {
            return make_op_list({{OpKind::parametric}}, std::uint32_t(edges.size()), 4);
        };
        for (std::uint32_t i = 0; i < n; ++i)
            for (std::uint32_t j = i + 1; j < n; ++j)
                if (rng.uniform_real() < 0.45) edges.push_back({i, j, ops(0)});
        std::vector<bool> has_in(n, false);
        for (const auto& e : edges) has_in[e.dst] = true;
        for (std::uint32_t i = 1; i < n; ++i)
            if (!has_in[i]) edges.push_back({0, i, ops(0)});
        for (std::uint32_t i = 0; i + 1 < n; ++i) {
            bool has_out = false;
            for (const auto& e : edges) has_out |= e.src == i;
            if (!has_out) edges.push_back({i, std::uint32_t(n - 1), ops(0)});
        }
        SupernetGraph g(std::vector<std::string>(n, "n"), edges, 4, 2, 4);
        const ChildModel child{&g, std::vector<std::uint32_t>(g.edge_count(), 0)};
        const auto paths = enumerate_paths(child);
        std::set<std::vector<std::uint32_t>> got;
        for (const auto& p : paths) {
            std::vector<std::uint32_t> seq{g.root()};
            for (auto e : p) seq.push_back(g.edge(e).dst);
            got.insert(seq);
        }
        if (got != oracle_sequences(child) || got.size() != paths.size())
            return {false, "mismatch on trial " + std::to_string(trial)};
    }
    const auto cell = make_complete_cell(4, 4, {{OpKind::parametric}});
    const ChildModel child{&cell, std::vector<std::uint32_t>(6, 0)};
    if (enumerate_paths(child).size() != 4) return {false, "4-node cell path count"};
    return {true, "200 random DAGs <= 8 nodes, plus the 4-path cell"};
}

// 5. shrinking invariants over 10 seeded runs plus golden-log replay
std::pair<bool, std::string> shrinking_invariants(const fs::path& golden_dir) {
    ToyWorld& w = toy_world();
    ShrinkConfig cfg;
    cfg.threshold = 100;
    cfg.drop_per_iter = 2;
    cfg.samples_per_op = 100;
    cfg.reset_after = 7;
    cfg.train = w.train;
    cfg.train.first_stage_epochs = 10;
    cfg.train.later_stage_epochs = 2;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const ShrinkState state = run_abs(w.space, cfg, w.data, seed);
        if (space_size(state.space) > cfg.threshold && state.stop_reason.empty())
            return {false, "loop did not terminate at threshold"};
        std::uint64_t prev = space_size(w.space);
        SupernetGraph current = w.space;
        for (const auto& rec : state.log) {
            if (rec.removed.size() + rec.shortfall != cfg.drop_per_iter)
                return {false, "removals plus shortfall != k"};
            if (rec.size_after >= prev) return {false, "size not strictly decreasing"};
            prev = rec.size_after;
            current = current.without_operators(rec.removed);
            for (const auto& e : current.edges())
                if (e.ops.empty()) return {false, "edge emptied"};
        }
        if (space_size(state.space) > cfg.threshold)
            return {false, "final size above threshold"};
    }
    // golden replay, bit-identical
    const ShrinkState replay = run_abs(w.space, cfg, w.data, 1);
    std::ostringstream serialized;
    for (const auto& rec : replay.log) serialized << iteration_to_json(rec).dump() << "\n";
    const fs::path golden = golden_dir / "shrink_replay_seed1.jsonl";
    if (!fs::exists(golden)) {
        fs::create_directories(golden_dir);
        std::ofstream out(golden);
        out << serialized.str();
        return {true, "10 seeded runs ok; golden log recorded at " + golden.string()};
    }
    std::ifstream in(golden);
    std::stringstream existing;
    existing << in.rdbuf();
    if (existing.str() != serialized.str()) return {false, "replay deviates from golden log"};
    return {true, "10 seeded runs ok; replay matches golden log bit-exactly"};
}

struct RankingOutcome {
    double angle_mean = 0.0, acc_mean = 0.0, random_mean = 0.0, random_std = 0.0;
    double angle_min = 1.0;
    std::vector<double> angle_taus, acc_taus;
};

RankingOutcome& ranking_outcome() {
    static RankingOutcome* out = [] {
        auto* r = new RankingOutcome();
        ToyWorld& w = toy_world();
        const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
        std::vector<double> rnd;
        for (int i = 0; i < 10; ++i) {
            const std::uint64_t seed = Rng::mix(2026, 1000 + i);
            WeightStore store = init_supernet(w.space, w.train.init, seed);
            for (std::size_t e = 0; e < w.train.first_stage_epochs; ++e)
                train_epoch(store, w.space, w.data.train, w.train, e,
                            w.train.first_stage_epochs);
            Rng rng(Rng::mix(seed, 0x72616e6bULL));
            const double angle_tau =
                rank_children_by_metric(w.space, w.table, RankMetric::angle, store, w.data, rng,
                                        VectorMode::full_graph, kDefaultPathCap, workers)
                    .tau;
            const double acc_tau =
                rank_children_by_metric(w.space, w.table, RankMetric::accuracy_rebn, store,
                                        w.data, rng, VectorMode::full_graph, kDefaultPathCap,
                                        workers)
                    .tau;
            const double rnd_tau = rank_children_by_metric(w.space, w.table, RankMetric::random,
                                                           store, w.data, rng)
                                       .tau;
            r->angle_taus.push_back(angle_tau);
            r->acc_taus.push_back(acc_tau);
            rnd.push_back(rnd_tau);
            r->angle_mean += angle_tau;
            r->acc_mean += acc_tau;
            r->random_mean += rnd_tau;
            r->angle_min = std::min(r->angle_min, angle_tau);
        }
        r->angle_mean /= 10.0;
        r->acc_mean /= 10.0;
        r->random_mean /= 10.0;
        double sq = 0.0;
        for (double t : rnd) sq += (t - r->random_mean) * (t - r->random_mean);
        r->random_std = std::sqrt(sq / 9.0);
        return r;
    }();
    return *out;
}

// 6. angle tau beats the random baseline by >= 3 of random's stddevs
std::pair<bool, std::string> ranking_quality() {
    const auto t0 = std::chrono::steady_clock::now();
    ToyWorld& w = toy_world();
    if (w.table.records.size() != 729 || space_size(w.space) != 729)
        return {false, "toy benchmark does not hold the full 729 children"};
    const RankingOutcome& r = ranking_outcome();
    const double bar = r.random_mean + 3.0 * r.random_std;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream detail;
    detail << "angle " << r.angle_mean << ", accuracy " << r.acc_mean << ", random "
           << r.random_mean << " (std " << r.random_std << "), bar " << bar << ", "
           << fmt(secs) << "s; angle>=accuracy: " << (r.angle_mean >= r.acc_mean ? "yes" : "no")
           << " (reported, not gated)";
    return {r.angle_mean > bar && secs < 1800.0, detail.str()};
}

// 7. angle evaluation of 100 children at least 10x faster than Re-BN accuracy
std::pair<bool, std::string> timing_direction() {
    ToyWorld& w = toy_world();
    WeightStore store = init_supernet(w.space, w.train.init, 500);
    TrainConfig cfg = w.train;
    cfg.first_stage_epochs = 5;
    for (std::size_t e = 0; e < cfg.first_stage_epochs; ++e)
        train_epoch(store, w.space, w.data.train, cfg, e, cfg.first_stage_epochs);
    std::vector<std::size_t> idx(w.table.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(501);
    rng.shuffle(idx);
    std::vector<ChildModel> children;
    for (std::size_t i = 0; i < 100; ++i)
        children.push_back(child_from_encoding(w.space, w.table.records[idx[i]].encoding));
    const auto [angle_t, acc_t] = timing_comparison(children, store, w.data, 5);
    const double speedup = acc_t.mean_seconds / std::max(angle_t.mean_seconds, 1e-12);
    return {speedup >= 10.0, "angle " + fmt(angle_t.mean_seconds) + "s, accuracy " +
                                 fmt(acc_t.mean_seconds) + "s, speedup " + fmt(speedup) + "x"};
}

// 8. stability report across 5 seeds is produced deterministically
std::pair<bool, std::string> stability_direction() {
    ToyWorld& w = toy_world();
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    TrainConfig cfg = w.train;
    cfg.first_stage_epochs = 20;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < 5; ++i) seeds.push_back(Rng::mix(9090, i));
    const StabilityReport a = stability_report(w.space, w.table, cfg, w.data, seeds,
                                               VectorMode::full_graph, kDefaultPathCap, workers);
    const StabilityReport b = stability_report(w.space, w.table, cfg, w.data, seeds,
                                               VectorMode::full_graph, kDefaultPathCap, workers);
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        if (a.entries[i].taus != b.entries[i].taus)
            return {false, "stability report not deterministic"};
    std::ostringstream detail;
    for (const auto& e : a.entries)
        detail << e.metric << " std " << e.stddev << " range " << e.range << "; ";
    detail << "direction documented, not gated";
    return {true, detail.str()};
}

// 9. analytic gradients match central finite differences on 50 random nets
std::pair<bool, std::string> gradient_correctness() {
    Rng rng(606);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t width = 2 + rng.uniform_index(3);
        const std::size_t classes = 2 + rng.uniform_index(3);
        const std::size_t nodes = 2 + rng.uniform_index(3);
        std::vector<OpMenuItem> menu{{OpKind::parametric}};
        if (rng.uniform_real() < 0.5) menu.push_back({OpKind::identity});
        if (rng.uniform_real() < 0.5) menu.push_back({OpKind::pooling, 2});
        const auto g = make_complete_cell(nodes, width, menu, 2, classes);
        WeightStore store = init_supernet(g, InitPolicy::kaiming_normal, Rng::mix(606, trial));
        Rng sample_rng(Rng::mix(607, trial));
        ChildModel child = sample_child(g, sample_rng);
        const std::size_t n = 4;
        Matrix x(n, 2);
        for (auto& v : x.data) v = rng.normal();
        std::vector<int> labels(n);
        for (auto& l : labels) l = int(rng.uniform_index(classes));

        ForwardTrace trace;
        compute_gradients(child, store, x, labels, trace);
        std::vector<ParamTensor*> touched{&store.stem_weight, &store.stem_bias,
                                          &store.cls_weight, &store.cls_bias};
        for (auto e : trace.active) {
            const OperatorSpec& op = child.op_on(e);
            if (op.kind != OpKind::parametric) continue;
            touched.push_back(&store.entry(op.id).weight);
            touched.push_back(&store.entry(op.id).norm_scale);
            touched.push_back(&store.entry(op.id).norm_shift);
        }
        std::vector<Matrix> analytic;
        for (auto* p : touched) {
            analytic.push_back(p->grad);
            p->zero_grad();
        }
        const double h = 1e-5;
        for (std::size_t t = 0; t < touched.size(); ++t)
            for (std::size_t i = 0; i < touched[t]->value.data.size(); ++i) {
                const double saved = touched[t]->value.data[i];
                touched[t]->value.data[i] = saved + h;
                const double lp = loss_only(child, store, x, labels);
                touched[t]->value.data[i] = saved - h;
                const double lm = loss_only(child, store, x, labels);
                touched[t]->value.data[i] = saved;
                const double fd = (lp - lm) / (2.0 * h);
                const double an = analytic[t].data[i];
                const double rel =
                    std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
                worst = std::max(worst, rel);
            }
        if (worst >= 1e-4)
            return {false, "relative error " + fmt(worst) + " at trial " +
                               std::to_string(trial)};
    }
    return {true, "50 networks, worst relative error " + fmt(worst)};
}

// 10. ground-truth-guided dropping reserves exactly the top operators
// (subject to connectivity), and the 3-seed comparison report is produced
std::pair<bool, std::string> operator_selection() {
    ToyWorld& w = toy_world();
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    ShrinkConfig cfg;
    cfg.threshold = 1;
    cfg.drop_per_iter = 2;
    cfg.samples_per_op = 50;
    cfg.train = w.train;
    cfg.train.first_stage_epochs = 10;
    cfg.train.later_stage_epochs = 2;
    const std::uint32_t drop = 6;
    std::vector<std::uint64_t> seeds{11, 22, 33};
    const SelectionReport report =
        operator_selection_report(w.space, w.table, cfg, drop, seeds, w.data, workers);
    if (report.runs.size() != seeds.size() * 3) return {false, "missing runs"};

    // self-consistency oracle: greedy removal by static ground-truth scores
    std::vector<OperatorScore> scores;
    for (const auto id : w.space.all_operator_ids())
        scores.push_back({id, ground_truth_operator_score(w.table, id), 0.0, 1});
    SupernetGraph current = w.space;
    std::vector<OperatorId> expected;
    while (expected.size() < drop) {
        std::vector<OperatorScore> live;
        for (const auto& s : scores)
            if (current.find_slot(s.op)) live.push_back(s);
        const auto removed = select_removals(
            current, live,
            std::uint32_t(std::min<std::size_t>(cfg.drop_per_iter, drop - expected.size())));
        if (removed.empty()) break;
        current = current.without_operators(removed);
        expected.insert(expected.end(), removed.begin(), removed.end());
    }
    for (const auto& run : report.runs) {
        if (run.metric != "ground-truth") continue;
        if (run.removed != expected) return {false, "ground-truth run deviates from oracle"};
    }
    double angle_reserved = 0.0, acc_reserved = 0.0;
    int angle_runs = 0, acc_runs = 0;
    for (const auto& run : report.runs) {
        if (run.metric == "angle") {
            angle_reserved += run.reserved_mean_gt;
            ++angle_runs;
        }
        if (run.metric == "accuracy") {
            acc_reserved += run.reserved_mean_gt;
            ++acc_runs;
        }
    }
    std::ostringstream detail;
    detail << "gt runs match oracle across " << seeds.size() << " seeds; reserved-set mean gt: "
           << "angle " << angle_reserved / angle_runs << ", accuracy "
           << acc_reserved / acc_runs;
    return {true, detail.str()};
}

} // namespace

int main(int argc, char** argv) {
    const fs::path golden_dir = argc > 1 ? fs::path(argv[1]) : fs::path("tests/golden");
    const auto t0 = std::chrono::steady_clock::now();

    run(1, "structural discrimination", structural_discrimination);
    run(2, "scale invariance of the angle", scale_invariance);
    run(3, "Kendall tau oracle equivalence", kendall_oracle);
    run(4, "path enumeration vs DFS oracle", path_enumeration);
    run(5, "shrinking invariants and golden replay",
        [&]() { return shrinking_invariants(golden_dir); });
    run(6, "ranking quality vs random baseline", ranking_quality);
    run(7, "timing direction (angle vs accuracy)", timing_direction);
    run(8, "stability report across seeds", stability_direction);
    run(9, "gradient correctness", gradient_correctness);
    run(10, "operator-selection protocol", operator_selection);

    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (g_failures == 0)
        std::cout << "ALL CRITERIA PASSED (total " << fmt(total) << "s)" << std::endl;
    else
        std::cout << "FAILURES: " << g_failures << " (total " << fmt(total) << "s)" << std::endl;
    return g_failures == 0 ? 0 : 1;
}
