#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "anglenas/angle.hpp"
#include "anglenas/bench.hpp"
#include "anglenas/parallel.hpp"
#include "anglenas/supernet.hpp"

namespace anglenas {

enum class ShrinkMetric { angle, accuracy, ground_truth };

inline const char* to_string(ShrinkMetric m) {
    switch (m) {
    case ShrinkMetric::angle: return "angle";
    case ShrinkMetric::accuracy: return "accuracy";
    case ShrinkMetric::ground_truth: return "ground-truth";
    }
    return "?";
}

inline ShrinkMetric shrink_metric_from_string(const std::string& s) {
    if (s == "angle") return ShrinkMetric::angle;
    if (s == "accuracy") return ShrinkMetric::accuracy;
    if (s == "ground-truth") return ShrinkMetric::ground_truth;
    throw ConfigError("unknown shrink metric: " + s);
}

struct OperatorScore {
    OperatorId op;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation of the per-child metric
    std::uint32_t samples = 0;
};

struct ShrinkConfig {
    std::uint64_t threshold = 100;     // T: stop once |space| <= T
    std::uint32_t drop_per_iter = 2;   // k
    std::uint32_t samples_per_op = 100;
    std::uint32_t reset_after = 0;     // R: base reset once this many removals accumulate (0 = off)
    std::uint32_t max_removals = 0;    // optional stop after this many removals (0 = off)
    TrainConfig train;
    ShrinkMetric metric = ShrinkMetric::angle;
    VectorMode vector_mode = VectorMode::full_graph;
    std::size_t path_cap = kDefaultPathCap;
    std::optional<std::pair<std::uint64_t, std::uint64_t>> param_band; // inclusive bounds
    std::size_t sample_retries = kSampleRetryBudget;

    void validate() const {
        if (threshold < 1) throw ConfigError("threshold must be >= 1");
        if (drop_per_iter < 1) throw ConfigError("drop_per_iter must be >= 1");
        if (samples_per_op < 1) throw ConfigError("samples_per_op must be >= 1");
        train.validate();
    }
};

struct IterationRecord {
    std::uint32_t iteration = 0;
    std::size_t epochs_trained = 0;
    double final_train_loss = 0.0;
    std::vector<OperatorScore> scores; // all live operators, ordered by id
    std::vector<OperatorId> removed;
    std::uint32_t shortfall = 0; // k minus actual removals, when connectivity blocked some
    std::uint64_t size_before = 0;
    std::uint64_t size_after = 0;
    bool base_reset = false;
};

struct ShrinkState {
    SupernetGraph space;
    std::vector<IterationRecord> log;
    std::uint32_t removed_total = 0;
    std::uint32_t removed_since_reset = 0;
    bool finished = false;
    std::string stop_reason;

    explicit ShrinkState(SupernetGraph s) : space(std::move(s)) {}
};

// Learnable-parameter count of a child (weights of its chosen parametric
// operators); the optional band filter generalizes flops-constrained
// sampling.
inline std::uint64_t child_param_count(const ChildModel& child) {
    std::uint64_t total = 0;
    for (std::size_t e = 0; e < child.choice.size(); ++e) {
        const OperatorSpec& op = child.op_on(e);
        if (op.kind == OpKind::parametric) total += op.weight_count();
    }
    return total;
}

// All valid children whose choice on op's edge is op, in lexicographic
// choice order.
inline std::vector<ChildModel> children_containing(const SupernetGraph& space, OperatorId op) {
    const auto slot = space.find_slot(op);
    if (!slot) throw Error("children_containing: operator not live");
    std::vector<ChildModel> out;
    ChildModel child{&space, std::vector<std::uint32_t>(space.edge_count(), 0)};
    child.choice[op.edge] = *slot;
    while (true) {
        if (child.is_valid()) out.push_back(child);
        std::size_t e = space.edge_count();
        bool rolled_over = true;
        while (e-- > 0) {
            if (e == op.edge) continue;
            if (++child.choice[e] < space.edge(e).ops.size()) {
                rolled_over = false;
                break;
            }
            child.choice[e] = 0;
        }
        if (rolled_over) return out;
    }
}

namespace detail {

// Population size of the children (valid or not) containing an operator.
inline std::uint64_t containing_population(const SupernetGraph& space, OperatorId op) {
    std::uint64_t prod = 1;
    for (std::uint32_t e = 0; e < space.edge_count(); ++e) {
        if (e == op.edge) continue;
        const std::uint64_t n = space.edge(e).ops.size();
        if (prod > std::numeric_limits<std::uint64_t>::max() / n)
            return std::numeric_limits<std::uint64_t>::max();
        prod *= n;
    }
    return prod;
}

inline ChildModel sample_scored_child(const SupernetGraph& space, Rng& rng, OperatorId op,
                                      const ShrinkConfig& cfg) {
    for (std::size_t attempt = 0; attempt < cfg.sample_retries; ++attempt) {
        ChildModel child = sample_child(space, rng, op, cfg.sample_retries);
        if (cfg.param_band) {
            const std::uint64_t p = child_param_count(child);
            if (p < cfg.param_band->first || p > cfg.param_band->second) continue;
        }
        return child;
    }
    throw SamplingExhausted("no child satisfied the parameter band");
}

inline OperatorScore finalize_score(OperatorId op, const std::vector<double>& values) {
    OperatorScore s;
    s.op = op;
    s.samples = std::uint32_t(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / double(values.size());
    if (values.size() >= 2) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(sq / double(values.size() - 1));
    }
    return s;
}

} // namespace detail

namespace detail {

// The expectation over children containing the operator: exact enumeration
// when the population fits in the sample budget (and no band filter skews
// it), uniform sampling otherwise.
template <typename Metric>
OperatorScore score_with(OperatorId op, const SupernetGraph& space, std::uint32_t n_samples,
                         Rng& rng, const ShrinkConfig& cfg, Metric&& metric) {
    std::vector<double> values;
    if (!cfg.param_band && containing_population(space, op) <= n_samples) {
        const std::vector<ChildModel> all = children_containing(space, op);
        if (all.empty()) throw SamplingExhausted("operator has no valid child");
        values.reserve(all.size());
        for (const auto& child : all) values.push_back(metric(child));
    } else {
        values.reserve(n_samples);
        for (std::uint32_t i = 0; i < n_samples; ++i)
            values.push_back(metric(sample_scored_child(space, rng, op, cfg)));
    }
    return finalize_score(op, values);
}

} // namespace detail

// Sample mean of the angle-based metric over children containing the
// operator, measured against the base snapshot.
inline OperatorScore score_operator(OperatorId op, const SupernetGraph& space,
                                    const WeightStore& store, std::uint32_t n_samples, Rng& rng,
                                    const ShrinkConfig& cfg = {}) {
    return detail::score_with(op, space, n_samples, rng, cfg, [&](const ChildModel& child) {
        try {
            return angle_of_child(child, store, WeightSource::base, cfg.vector_mode,
                                  cfg.path_cap);
        } catch (const ZeroNormVector&) {
            return 0.0; // all-identity child carries no displacement signal
        }
    });
}

// Accuracy-based baseline score: mean validation accuracy (with Re-BN) of
// children containing the operator, weights inherited from the supernet.
inline OperatorScore score_operator_accuracy(OperatorId op, const SupernetGraph& space,
                                             const WeightStore& store, std::uint32_t n_samples,
                                             Rng& rng, const DataBundle& data,
                                             const ShrinkConfig& cfg = {}) {
    return detail::score_with(op, space, n_samples, rng, cfg, [&](const ChildModel& child) {
        return eval_child_accuracy(child, store, data, /*re_bn=*/true, cfg.train.batch_size);
    });
}

// Exact ground-truth score from a benchmark table (static across iterations).
inline OperatorScore score_operator_ground_truth(OperatorId op, const GroundTruthTable& table) {
    std::vector<double> accs;
    for (const auto& rec : table.records)
        if (op.edge < rec.encoding.size() && rec.encoding[op.edge] == std::int32_t(op.slot))
            accs.push_back(rec.accuracy);
    if (accs.empty()) throw Error("operator is contained in no child of the table");
    return detail::finalize_score(op, accs);
}

// True when removing `candidate` (on top of `already_removed`) leaves a
// root-to-leaf path over edges that still carry at least one operator other
// than "none"; such a path guarantees the space still admits a valid child.
inline bool removal_keeps_connectivity(const SupernetGraph& space,
                                       const std::vector<OperatorId>& already_removed,
                                       OperatorId candidate) {
    std::vector<bool> edge_ok(space.edge_count(), false);
    for (std::uint32_t e = 0; e < space.edge_count(); ++e) {
        for (const auto& op : space.edge(e).ops) {
            if (op.kind == OpKind::none) continue;
            if (op.id == candidate) continue;
            if (std::find(already_removed.begin(), already_removed.end(), op.id) !=
                already_removed.end())
                continue;
            edge_ok[e] = true;
            break;
        }
    }
    std::vector<bool> reach(space.node_count(), false);
    reach[space.root()] = true;
    for (std::uint32_t n = 0; n < space.node_count(); ++n) {
        if (!reach[n]) continue;
        for (auto e : space.out_edges(n))
            if (edge_ok[e]) reach[space.edge(e).dst] = true;
    }
    return reach[space.leaf()];
}

// Deterministic removal selection: walk scores ascending (ties by operator
// id), skip candidates whose removal would empty an edge or disconnect the
// space, and substitute the next-lowest until k removals are found or
// candidates run out.
inline std::vector<OperatorId> select_removals(const SupernetGraph& space,
                                               std::vector<OperatorScore> scores,
                                               std::uint32_t k) {
    std::sort(scores.begin(), scores.end(), [](const OperatorScore& a, const OperatorScore& b) {
        if (a.mean != b.mean) return a.mean < b.mean;
        return a.op < b.op;
    });
    std::vector<std::size_t> live_count(space.edge_count(), 0);
    for (std::uint32_t e = 0; e < space.edge_count(); ++e)
        live_count[e] = space.edge(e).ops.size();
    std::vector<OperatorId> removed;
    for (const auto& s : scores) {
        if (removed.size() == k) break;
        if (live_count[s.op.edge] <= 1) continue;
        if (!removal_keeps_connectivity(space, removed, s.op)) continue;
        removed.push_back(s.op);
        --live_count[s.op.edge];
    }
    return removed;
}

// One shrinking iteration: train the supernet for the stage's epochs, score
// every live operator, drop the k lowest subject to the connectivity rule,
// and reset the base snapshot once enough operators have gone.
inline void shrink_step(ShrinkState& state, WeightStore& store, const ShrinkConfig& cfg,
                        const DataBundle& data, std::uint64_t iter_seed,
                        const GroundTruthTable* gt_table = nullptr, unsigned workers = 1) {
    IterationRecord rec;
    rec.iteration = std::uint32_t(state.log.size());
    rec.size_before = space_size(state.space);

    const std::size_t epochs =
        rec.iteration == 0 ? cfg.train.first_stage_epochs : cfg.train.later_stage_epochs;
    for (std::size_t e = 0; e < epochs; ++e) {
        const EpochLog el = train_epoch(store, state.space, data.train, cfg.train, e, epochs);
        rec.final_train_loss = el.mean_loss;
    }
    rec.epochs_trained = epochs;

    const std::vector<OperatorId> live = state.space.all_operator_ids();
    rec.scores.resize(live.size());
    if (cfg.metric == ShrinkMetric::ground_truth) {
        if (!gt_table) throw MissingBenchmark("ground-truth metric needs a benchmark table");
        for (std::size_t i = 0; i < live.size(); ++i)
            rec.scores[i] = score_operator_ground_truth(live[i], *gt_table);
    } else {
        // per-operator derived streams keep scoring independent of the
        // worker count
        parallel_for(live.size(), workers, [&](std::size_t i) {
            Rng op_rng(Rng::mix(iter_seed, i));
            rec.scores[i] =
                cfg.metric == ShrinkMetric::angle
                    ? score_operator(live[i], state.space, store, cfg.samples_per_op, op_rng, cfg)
                    : score_operator_accuracy(live[i], state.space, store, cfg.samples_per_op,
                                              op_rng, data, cfg);
        });
    }

    std::uint32_t budget = cfg.drop_per_iter;
    if (cfg.max_removals > 0)
        budget = std::min(budget, cfg.max_removals - std::min(cfg.max_removals,
                                                              state.removed_total));
    rec.removed = select_removals(state.space, rec.scores, budget);
    if (rec.removed.empty())
        throw NoRemovableOperator("every live operator is its edge's sole survivor");
    rec.shortfall = budget - std::uint32_t(rec.removed.size());

    state.space = state.space.without_operators(rec.removed);
    state.removed_total += std::uint32_t(rec.removed.size());
    state.removed_since_reset += std::uint32_t(rec.removed.size());
    if (cfg.reset_after > 0 && state.removed_since_reset > cfg.reset_after) {
        store.reset_base(state.removed_total);
        state.removed_since_reset = 0;
        rec.base_reset = true;
    }
    rec.size_after = space_size(state.space);
    state.log.push_back(std::move(rec));
}

// The full shrinking loop: initialize the supernet, then iterate shrink
// steps until the space size drops to the threshold (or nothing can be
// removed). The returned log is sufficient to replay every decision.
inline ShrinkState run_abs(const SupernetGraph& space, const ShrinkConfig& cfg,
                           const DataBundle& data, std::uint64_t seed,
                           WeightStore* out_store = nullptr,
                           const GroundTruthTable* gt_table = nullptr, unsigned workers = 1) {
    cfg.validate();
    ShrinkState state(space);
    WeightStore store = init_supernet(space, cfg.train.init, seed);
    while (space_size(state.space) > cfg.threshold &&
           (cfg.max_removals == 0 || state.removed_total < cfg.max_removals)) {
        const std::uint64_t iter_seed = Rng::mix(seed, 0xabULL + state.log.size());
        try {
            shrink_step(state, store, cfg, data, iter_seed, gt_table, workers);
        } catch (const NoRemovableOperator& e) {
            state.stop_reason = e.what();
            break;
        }
    }
    if (state.stop_reason.empty())
        state.stop_reason = space_size(state.space) <= cfg.threshold
                                ? "size reached threshold"
                                : "removal budget exhausted";
    state.finished = true;
    if (out_store) *out_store = std::move(store);
    return state;
}

// --- shrink log serialization ------------------------------------------------------

inline nlohmann::json iteration_to_json(const IterationRecord& rec) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : rec.scores)
        scores.push_back({{"op", {s.op.edge, s.op.slot}},
                          {"mean", s.mean},
                          {"std", s.stddev},
                          {"n", s.samples}});
    nlohmann::json removed = nlohmann::json::array();
    for (const auto& id : rec.removed) removed.push_back({id.edge, id.slot});
    return nlohmann::json{{"iteration", rec.iteration},
                          {"epochs", rec.epochs_trained},
                          {"train_loss", rec.final_train_loss},
                          {"scores", scores},
                          {"removed", removed},
                          {"shortfall", rec.shortfall},
                          {"size_before", rec.size_before},
                          {"size_after", rec.size_after},
                          {"base_reset", rec.base_reset}};
}

// Line-delimited records: a header line, then one JSON object per iteration.
inline void save_shrink_log(const ShrinkState& state, const std::filesystem::path& path,
                            std::uint64_t config_hash, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write shrink log: " + path.string());
    out << nlohmann::json{{"schema", "anglenas-shrinklog-v1"},
                          {"config_hash", config_hash},
                          {"seed", seed},
                          {"removed_total", state.removed_total},
                          {"stop_reason", state.stop_reason}}
               .dump()
        << "\n";
    for (const auto& rec : state.log) out << iteration_to_json(rec).dump() << "\n";
}

} // namespace anglenas
