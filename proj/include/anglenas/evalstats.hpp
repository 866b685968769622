#pragma once

#include <algorithm>
#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "anglenas/shrink.hpp"

namespace anglenas {

// --- Kendall rank correlation -------------------------------------------------

namespace detail {

// Inversions via merge sort.
inline std::uint64_t count_inversions(std::vector<std::uint32_t>& v, std::vector<std::uint32_t>& tmp,
                                      std::size_t lo, std::size_t hi) {
    if (hi - lo <= 1) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t inv = count_inversions(v, tmp, lo, mid) + count_inversions(v, tmp, mid, hi);
    std::size_t a = lo, b = mid, o = lo;
    while (a < mid && b < hi) {
        if (v[a] <= v[b])
            tmp[o++] = v[a++];
        else {
            inv += mid - a;
            tmp[o++] = v[b++];
        }
    }
    while (a < mid) tmp[o++] = v[a++];
    while (b < hi) tmp[o++] = v[b++];
    std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
    return inv;
}

inline void check_permutation(std::span<const std::uint32_t> r, const char* which) {
    std::vector<bool> seen(r.size(), false);
    for (auto v : r) {
        if (v >= r.size() || seen[v])
            throw Error(std::string("kendalls_tau: ") + which + " is not a permutation");
        seen[v] = true;
    }
}

} // namespace detail

// Tau-a over two strict rankings of the same item set:
// (concordant - discordant) / (n(n-1)/2). Computed by inversion counting;
// the O(n^2) pair-counting definition lives in the tests as the oracle.
inline double kendalls_tau(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    if (a.size() != b.size()) throw LengthMismatch("kendalls_tau: rankings differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw Error("kendalls_tau: need at least two items");
    detail::check_permutation(a, "first ranking");
    detail::check_permutation(b, "second ranking");
    // order items by rank under a, then count out-of-order pairs under b
    std::vector<std::uint32_t> items(n);
    for (std::uint32_t i = 0; i < n; ++i) items[a[i]] = i;
    std::vector<std::uint32_t> seq(n);
    for (std::size_t pos = 0; pos < n; ++pos) seq[pos] = b[items[pos]];
    std::vector<std::uint32_t> tmp(n);
    const std::uint64_t inversions = detail::count_inversions(seq, tmp, 0, n);
    const std::uint64_t total = std::uint64_t(n) * (n - 1) / 2;
    return (double(total) - 2.0 * double(inversions)) / double(total);
}

// Descending-value ranking with ties resolved by item index. Returns
// rank_of_item and the number of tied pairs that had to be resolved.
inline std::pair<std::vector<std::uint32_t>, std::size_t>
ranks_descending(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::uint32_t> order(n);
    for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
        if (values[x] != values[y]) return values[x] > values[y];
        return x < y;
    });
    std::size_t tied_pairs = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const std::size_t g = j - i + 1;
        tied_pairs += g * (g - 1) / 2;
        i = j;
    }
    std::vector<std::uint32_t> rank(n);
    for (std::uint32_t pos = 0; pos < n; ++pos) rank[order[pos]] = pos;
    return {std::move(rank), tied_pairs};
}

// --- ranking experiments ----------------------------------------------------------

enum class RankMetric { angle, accuracy_rebn, random };

inline const char* to_string(RankMetric m) {
    switch (m) {
    case RankMetric::angle: return "angle";
    case RankMetric::accuracy_rebn: return "accuracy-rebn";
    case RankMetric::random: return "random";
    }
    return "?";
}

struct RankingReport {
    std::string metric;
    std::vector<double> values;       // per child, table order
    std::vector<double> ground_truth; // accuracies, same order
    double tau = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::size_t tied_pairs = 0;          // metric-value ties resolved by encoding order
    std::size_t zero_signal_children = 0; // children whose angle is undefined (treated as 0)
    bool degenerate = false;             // all metric values equal; tau reported as 0
};

inline ChildModel child_from_encoding(const SupernetGraph& space,
                                      const std::vector<std::int32_t>& encoding) {
    if (encoding.size() != space.edge_count())
        throw Error("child_from_encoding: edge count mismatch");
    ChildModel child{&space, std::vector<std::uint32_t>(encoding.size(), 0)};
    for (std::size_t e = 0; e < encoding.size(); ++e) {
        const auto slot = space.find_slot({std::uint32_t(e), std::uint32_t(encoding[e])});
        if (!slot) throw Error("child_from_encoding: operator not live in space");
        child.choice[e] = *slot;
    }
    return child;
}

// Scores every child of the table by the chosen metric and correlates the
// metric ranking with the ground-truth ranking (tau-a on strict rankings;
// ties resolved by encoding order and flagged).
inline RankingReport rank_children_by_metric(const SupernetGraph& space,
                                             const GroundTruthTable& table, RankMetric metric,
                                             const WeightStore& store, const DataBundle& data,
                                             Rng& rng, VectorMode mode = VectorMode::full_graph,
                                             std::size_t path_cap = kDefaultPathCap,
                                             unsigned workers = 1) {
    RankingReport report;
    report.metric = to_string(metric);
    report.epoch = store.epoch;
    const std::size_t n = table.records.size();
    if (n < 2) throw Error("rank_children_by_metric: need at least two children");
    report.values.resize(n);
    report.ground_truth.resize(n);
    std::vector<std::uint8_t> zero_signal(n, 0);
    for (std::size_t i = 0; i < n; ++i) report.ground_truth[i] = table.records[i].accuracy;

    if (metric == RankMetric::random) {
        for (std::size_t i = 0; i < n; ++i) report.values[i] = rng.uniform_real();
    } else {
        parallel_for(n, workers, [&](std::size_t i) {
            const ChildModel child = child_from_encoding(space, table.records[i].encoding);
            if (metric == RankMetric::angle) {
                try {
                    report.values[i] =
                        angle_of_child(child, store, WeightSource::base, mode, path_cap);
                } catch (const ZeroNormVector&) {
                    report.values[i] = 0.0;
                    zero_signal[i] = 1;
                }
            } else {
                report.values[i] = eval_child_accuracy(child, store, data, /*re_bn=*/true);
            }
        });
    }
    for (auto z : zero_signal) report.zero_signal_children += z;

    const auto [metric_rank, ties] = ranks_descending(report.values);
    report.tied_pairs = ties;
    const double mn = *std::min_element(report.values.begin(), report.values.end());
    const double mx = *std::max_element(report.values.begin(), report.values.end());
    if (mn == mx) {
        report.degenerate = true;
        report.tau = 0.0;
        return report;
    }
    const auto [gt_rank, gt_ties] = ranks_descending(report.ground_truth);
    (void)gt_ties;
    report.tau = kendalls_tau(metric_rank, gt_rank);
    return report;
}

// --- stability across seeds ----------------------------------------------------------

struct StabilityEntry {
    std::string metric;
    std::vector<double> taus;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation
    double range = 0.0;  // max - min
};

struct StabilityReport {
    std::vector<StabilityEntry> entries;
    std::vector<std::uint64_t> seeds;
};

inline StabilityEntry summarize_taus(const std::string& metric, std::vector<double> taus) {
    StabilityEntry e;
    e.metric = metric;
    e.taus = std::move(taus);
    double sum = 0.0;
    for (double t : e.taus) sum += t;
    e.mean = sum / double(e.taus.size());
    if (e.taus.size() >= 2) {
        double sq = 0.0;
        for (double t : e.taus) sq += (t - e.mean) * (t - e.mean);
        e.stddev = std::sqrt(sq / double(e.taus.size() - 1));
    }
    const auto [mn, mx] = std::minmax_element(e.taus.begin(), e.taus.end());
    e.range = *mx - *mn;
    return e;
}

// Trains one supernet per seed and reports each metric's tau spread.
inline StabilityReport stability_report(const SupernetGraph& space, const GroundTruthTable& table,
                                        const TrainConfig& cfg, const DataBundle& data,
                                        const std::vector<std::uint64_t>& seeds,
                                        VectorMode mode = VectorMode::full_graph,
                                        std::size_t path_cap = kDefaultPathCap,
                                        unsigned workers = 1) {
    if (seeds.empty()) throw ConfigError("stability_report: needs at least one seed");
    std::vector<double> angle_taus, acc_taus, random_taus;
    for (const auto seed : seeds) {
        WeightStore store = init_supernet(space, cfg.init, seed);
        for (std::size_t e = 0; e < cfg.first_stage_epochs; ++e)
            train_epoch(store, space, data.train, cfg, e, cfg.first_stage_epochs);
        Rng rank_rng(Rng::mix(seed, 0x72616e6bULL));
        angle_taus.push_back(rank_children_by_metric(space, table, RankMetric::angle, store, data,
                                                     rank_rng, mode, path_cap, workers)
                                 .tau);
        acc_taus.push_back(rank_children_by_metric(space, table, RankMetric::accuracy_rebn, store,
                                                   data, rank_rng, mode, path_cap, workers)
                               .tau);
        random_taus.push_back(rank_children_by_metric(space, table, RankMetric::random, store,
                                                      data, rank_rng, mode, path_cap, workers)
                                  .tau);
    }
    StabilityReport report;
    report.seeds = seeds;
    report.entries.push_back(summarize_taus("angle", std::move(angle_taus)));
    report.entries.push_back(summarize_taus("accuracy-rebn", std::move(acc_taus)));
    report.entries.push_back(summarize_taus("random", std::move(random_taus)));
    return report;
}

// --- convergence during supernet training ------------------------------------------------

struct ConvergencePoint {
    std::uint64_t epoch = 0;
    std::vector<std::pair<std::string, double>> taus; // metric -> tau
    std::vector<std::pair<std::string, bool>> degenerate;
};

// Trains a supernet and probes the ranking quality of each metric at the
// listed epochs (epoch 0 probes the untrained supernet).
inline std::vector<ConvergencePoint>
convergence_curve(const SupernetGraph& space, const GroundTruthTable& table,
                  const TrainConfig& cfg, const DataBundle& data,
                  const std::vector<RankMetric>& metrics,
                  const std::vector<std::uint64_t>& probe_epochs, std::uint64_t seed,
                  VectorMode mode = VectorMode::full_graph,
                  std::size_t path_cap = kDefaultPathCap, unsigned workers = 1) {
    if (!std::is_sorted(probe_epochs.begin(), probe_epochs.end()))
        throw ConfigError("probe epochs must be sorted ascending");
    WeightStore store = init_supernet(space, cfg.init, seed);
    Rng rank_rng(Rng::mix(seed, 0x70726f62ULL));
    std::vector<ConvergencePoint> curve;
    const std::size_t total =
        probe_epochs.empty() ? 0 : std::size_t(probe_epochs.back());
    for (const auto probe : probe_epochs) {
        while (store.epoch < probe)
            train_epoch(store, space, data.train, cfg, std::size_t(store.epoch),
                        std::max<std::size_t>(total, 1));
        ConvergencePoint point;
        point.epoch = store.epoch;
        for (const auto m : metrics) {
            const RankingReport r = rank_children_by_metric(space, table, m, store, data,
                                                            rank_rng, mode, path_cap, workers);
            point.taus.emplace_back(r.metric, r.tau);
            point.degenerate.emplace_back(r.metric, r.degenerate);
        }
        curve.push_back(std::move(point));
    }
    return curve;
}

// --- metric timing -------------------------------------------------------------------

struct TimingReport {
    std::string metric;
    std::size_t children = 0;
    std::size_t repetitions = 0;
    double mean_seconds = 0.0;
    double stddev_seconds = 0.0;
};

// Wall-clock comparison of angle evaluation vs accuracy-with-Re-BN
// evaluation over the same fixed child set. Runs strictly sequentially.
inline std::pair<TimingReport, TimingReport>
timing_comparison(const std::vector<ChildModel>& children, const WeightStore& store,
                  const DataBundle& data, std::size_t repetitions,
                  VectorMode mode = VectorMode::full_graph,
                  std::size_t path_cap = kDefaultPathCap) {
    if (repetitions < 3) throw Error("timing_comparison: need at least 3 repetitions");
    if (children.empty()) throw Error("timing_comparison: empty child set");
    auto timed = [&](auto&& body) {
        std::vector<double> times;
        times.reserve(repetitions);
        for (std::size_t r = 0; r < repetitions; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            body();
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
        double mean = 0.0;
        for (double t : times) mean += t;
        mean /= double(times.size());
        double sq = 0.0;
        for (double t : times) sq += (t - mean) * (t - mean);
        return std::pair<double, double>{mean, std::sqrt(sq / double(times.size() - 1))};
    };
    volatile double sink = 0.0;
    const auto [angle_mean, angle_std] = timed([&]() {
        double acc = 0.0;
        for (const auto& c : children) {
            try {
                acc += angle_of_child(c, store, WeightSource::base, mode, path_cap);
            } catch (const ZeroNormVector&) {
            }
        }
        sink = acc;
    });
    const auto [acc_mean, acc_std] = timed([&]() {
        double acc = 0.0;
        for (const auto& c : children) acc += eval_child_accuracy(c, store, data, /*re_bn=*/true);
        sink = acc;
    });
    (void)sink;
    TimingReport angle{"angle", children.size(), repetitions, angle_mean, angle_std};
    TimingReport accuracy{"accuracy-rebn", children.size(), repetitions, acc_mean, acc_std};
    return {angle, accuracy};
}

// --- operator-selection comparison ------------------------------------------------------

struct SelectionRun {
    std::string metric;
    std::uint64_t seed = 0;
    std::vector<OperatorId> removed;
    std::vector<OperatorId> reserved;
    double reserved_mean_gt = 0.0;
    double removed_mean_gt = 0.0;
    std::size_t top_overlap = 0; // reserved ops among the top ground-truth ops
};

struct SelectionReport {
    std::uint32_t drop_count = 0;
    std::vector<std::pair<OperatorId, double>> gt_scores; // all ops, descending score
    std::vector<SelectionRun> runs;
};

// Shrinks with each metric until drop_count operators are gone, then grades
// the reserved sets against the ground-truth operator ranking. Ground-truth
// scores are static, so the ground-truth run doubles as a self-consistency
// oracle for the selection rule.
inline SelectionReport operator_selection_report(const SupernetGraph& space,
                                                 const GroundTruthTable& table,
                                                 const ShrinkConfig& base_cfg,
                                                 std::uint32_t drop_count,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const DataBundle& data, unsigned workers = 1) {
    SelectionReport report;
    report.drop_count = drop_count;
    for (const auto id : space.all_operator_ids())
        report.gt_scores.emplace_back(id, ground_truth_operator_score(table, id));
    std::sort(report.gt_scores.begin(), report.gt_scores.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const std::size_t keep_count = report.gt_scores.size() - std::min<std::size_t>(
                                                                 drop_count, report.gt_scores.size());
    std::vector<OperatorId> top_ops;
    for (std::size_t i = 0; i < keep_count; ++i) top_ops.push_back(report.gt_scores[i].first);

    auto grade = [&](const std::string& metric, std::uint64_t seed, const ShrinkState& state) {
        SelectionRun run;
        run.metric = metric;
        run.seed = seed;
        for (const auto& rec : state.log)
            run.removed.insert(run.removed.end(), rec.removed.begin(), rec.removed.end());
        run.reserved = state.space.all_operator_ids();
        double rsum = 0.0;
        for (const auto id : run.reserved) {
            const double s = ground_truth_operator_score(table, id);
            rsum += s;
            if (std::find(top_ops.begin(), top_ops.end(), id) != top_ops.end())
                ++run.top_overlap;
        }
        run.reserved_mean_gt = run.reserved.empty() ? 0.0 : rsum / double(run.reserved.size());
        double msum = 0.0;
        for (const auto id : run.removed) msum += ground_truth_operator_score(table, id);
        run.removed_mean_gt = run.removed.empty() ? 0.0 : msum / double(run.removed.size());
        return run;
    };

    for (const auto seed : seeds) {
        for (const auto metric :
             {ShrinkMetric::angle, ShrinkMetric::accuracy, ShrinkMetric::ground_truth}) {
            ShrinkConfig cfg = base_cfg;
            cfg.metric = metric;
            cfg.threshold = 1;
            cfg.max_removals = drop_count;
            if (drop_count == 0) {
                ShrinkState state(space);
                state.finished = true;
                state.stop_reason = "nothing to drop";
                report.runs.push_back(grade(to_string(metric), seed, state));
                continue;
            }
            const ShrinkState state =
                run_abs(space, cfg, data, seed, nullptr, &table, workers);
            report.runs.push_back(grade(to_string(metric), seed, state));
        }
    }
    return report;
}

} // namespace anglenas
