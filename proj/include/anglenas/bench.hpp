#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "anglenas/parallel.hpp"
#include "anglenas/supernet.hpp"

namespace anglenas {

constexpr const char* kBenchSchema = "anglenas-bench-v1";

struct ChildRecord {
    std::vector<std::int32_t> encoding; // original slot id per edge
    double accuracy = 0.0;
    std::uint64_t seed = 0;
};

struct BenchmarkConfig {
    TrainConfig train;        // per-child standalone budget (first_stage_epochs)
    std::size_t child_cap = 1000;
};

// Exhaustive standalone accuracies for every valid child of a toy space;
// the ranking oracle. Keyed by the space hash so tables can never be read
// against the wrong space.
struct GroundTruthTable {
    std::uint64_t space_hash = 0;
    std::uint64_t seed = 0;
    BenchmarkConfig config;
    std::vector<ChildRecord> records; // sorted by encoding

    const ChildRecord* find(const std::vector<std::int32_t>& encoding) const {
        auto it = std::lower_bound(records.begin(), records.end(), encoding,
                                   [](const ChildRecord& r, const std::vector<std::int32_t>& e) {
                                       return r.encoding < e;
                                   });
        if (it == records.end() || it->encoding != encoding) return nullptr;
        return &*it;
    }
};

// All valid children of a space, in lexicographic choice order.
inline std::vector<ChildModel> enumerate_valid_children(const SupernetGraph& space) {
    std::vector<ChildModel> out;
    ChildModel child{&space, std::vector<std::uint32_t>(space.edge_count(), 0)};
    while (true) {
        if (child.is_valid()) out.push_back(child);
        std::size_t e = space.edge_count();
        while (e-- > 0) {
            if (++child.choice[e] < space.edge(e).ops.size()) break;
            child.choice[e] = 0;
            if (e == 0) return out;
        }
        if (space.edge_count() == 0) return out;
    }
}

// Trains every valid child standalone from a fresh per-child initialization
// to a fixed epoch budget and records its validation accuracy (with
// recalibrated normalization statistics). Deterministic given the seed, for
// any worker count.
inline GroundTruthTable generate_benchmark(const SupernetGraph& space, const BenchmarkConfig& cfg,
                                           const DataBundle& data, std::uint64_t seed,
                                           unsigned workers = 1) {
    const std::vector<ChildModel> children = enumerate_valid_children(space);
    if (children.size() > cfg.child_cap)
        throw CapExceeded("space has " + std::to_string(children.size()) +
                          " valid children (cap " + std::to_string(cfg.child_cap) + ")");
    GroundTruthTable table;
    table.space_hash = space.hash();
    table.seed = seed;
    table.config = cfg;
    table.records.resize(children.size());
    const std::size_t epochs = cfg.train.first_stage_epochs;
    parallel_for(children.size(), workers, [&](std::size_t i) {
        const std::uint64_t child_seed = Rng::mix(seed, i);
        WeightStore store = init_supernet(space, cfg.train.init, child_seed);
        for (std::size_t e = 0; e < epochs; ++e)
            train_child_epoch(store, children[i], data.train, cfg.train, e, epochs);
        ChildRecord rec;
        rec.encoding = children[i].encoding();
        rec.seed = child_seed;
        rec.accuracy = eval_child_accuracy(children[i], store, data, /*re_bn=*/true,
                                           cfg.train.batch_size);
        table.records[i] = std::move(rec);
    });
    std::sort(table.records.begin(), table.records.end(),
              [](const ChildRecord& a, const ChildRecord& b) { return a.encoding < b.encoding; });
    return table;
}

// Mean ground-truth accuracy over all children containing the operator.
inline double ground_truth_operator_score(const GroundTruthTable& table, OperatorId op) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& rec : table.records) {
        if (op.edge >= rec.encoding.size()) throw Error("operator edge outside table's space");
        if (rec.encoding[op.edge] == std::int32_t(op.slot)) {
            sum += rec.accuracy;
            ++count;
        }
    }
    if (count == 0) throw Error("operator is contained in no child of the table");
    return sum / double(count);
}

struct BestChild {
    std::vector<std::int32_t> encoding;
    double accuracy = 0.0;
};

inline bool encoding_in_space(const std::vector<std::int32_t>& encoding,
                              const SupernetGraph& space) {
    if (encoding.size() != space.edge_count()) return false;
    for (std::size_t e = 0; e < encoding.size(); ++e) {
        const auto& ops = space.edge(e).ops;
        const bool live = std::any_of(ops.begin(), ops.end(), [&](const OperatorSpec& o) {
            return o.id.slot == std::uint32_t(encoding[e]);
        });
        if (!live) return false;
    }
    return true;
}

// Highest-accuracy child within the subspace; ties break toward the lowest
// encoding (records are sorted).
inline BestChild best_in_space(const GroundTruthTable& table, const SupernetGraph& subspace) {
    const ChildRecord* best = nullptr;
    for (const auto& rec : table.records) {
        if (!encoding_in_space(rec.encoding, subspace)) continue;
        if (!best || rec.accuracy > best->accuracy) best = &rec;
    }
    if (!best) throw EmptySubspace("no table record lies in the subspace");
    return {best->encoding, best->accuracy};
}

// --- persistence ---------------------------------------------------------------

inline nlohmann::json table_to_json(const GroundTruthTable& t) {
    nlohmann::json j;
    j["schema"] = kBenchSchema;
    j["space_hash"] = t.space_hash;
    j["seed"] = t.seed;
    j["child_cap"] = t.config.child_cap;
    j["train"] = {{"epochs", t.config.train.first_stage_epochs},
                  {"batch_size", t.config.train.batch_size},
                  {"lr", t.config.train.lr},
                  {"momentum", t.config.train.momentum},
                  {"schedule", t.config.train.schedule},
                  {"init", to_string(t.config.train.init)}};
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : t.records)
        recs.push_back({{"c", r.encoding}, {"acc", r.accuracy}, {"seed", r.seed}});
    j["records"] = recs;
    return j;
}

inline GroundTruthTable table_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j["schema"] != kBenchSchema)
        throw IoFailure("benchmark table: missing or unsupported schema id");
    GroundTruthTable t;
    t.space_hash = j.at("space_hash").get<std::uint64_t>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.config.child_cap = j.value("child_cap", std::size_t(1000));
    if (j.contains("train")) {
        const auto& tr = j["train"];
        t.config.train.first_stage_epochs = tr.value("epochs", std::size_t(40));
        t.config.train.batch_size = tr.value("batch_size", std::size_t(64));
        t.config.train.lr = tr.value("lr", 0.05);
        t.config.train.momentum = tr.value("momentum", 0.9);
        t.config.train.schedule = tr.value("schedule", std::string("constant"));
        t.config.train.init = init_policy_from_string(tr.value("init", std::string("kaiming-normal")));
    }
    for (const auto& r : j.at("records")) {
        ChildRecord rec;
        rec.encoding = r.at("c").get<std::vector<std::int32_t>>();
        rec.accuracy = r.at("acc").get<double>();
        rec.seed = r.at("seed").get<std::uint64_t>();
        t.records.push_back(std::move(rec));
    }
    return t;
}

inline void save_table(const GroundTruthTable& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write benchmark table: " + path.string());
    out << table_to_json(t).dump(2) << "\n";
}

// Loading verifies the space hash; a table never silently applies to a
// different space.
inline GroundTruthTable load_table(const std::filesystem::path& path,
                                   const SupernetGraph& expected_space) {
    std::ifstream in(path);
    if (!in) throw MissingBenchmark("benchmark table not found: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure("benchmark table " + path.string() + ": " + e.what());
    }
    GroundTruthTable t = table_from_json(j);
    if (t.space_hash != expected_space.hash())
        throw IoFailure("benchmark table belongs to a different space (hash mismatch)");
    return t;
}

// --- shrunk-space catalog --------------------------------------------------------

struct ShrunkSpaceCatalog {
    std::vector<std::pair<std::string, SupernetGraph>> spaces;
};

// Catalog of operator-kind-subset spaces derived from a parent: for every
// nonempty subset of the kinds present in the parent, keep only operators of
// those kinds (edges that would empty are skipped entirely).
inline ShrunkSpaceCatalog make_kind_subset_catalog(const SupernetGraph& parent) {
    std::vector<OpKind> kinds;
    for (const auto& e : parent.edges())
        for (const auto& op : e.ops)
            if (std::find(kinds.begin(), kinds.end(), op.kind) == kinds.end())
                kinds.push_back(op.kind);
    std::sort(kinds.begin(), kinds.end(),
              [](OpKind a, OpKind b) { return int(a) < int(b); });
    ShrunkSpaceCatalog catalog;
    const std::size_t n_subsets = std::size_t(1) << kinds.size();
    for (std::size_t mask = 1; mask < n_subsets; ++mask) {
        std::vector<OpKind> subset;
        for (std::size_t b = 0; b < kinds.size(); ++b)
            if (mask & (std::size_t(1) << b)) subset.push_back(kinds[b]);
        std::vector<OperatorId> removed;
        bool feasible = true;
        for (const auto& e : parent.edges()) {
            std::size_t kept = 0;
            for (const auto& op : e.ops) {
                if (std::find(subset.begin(), subset.end(), op.kind) == subset.end())
                    removed.push_back(op.id);
                else
                    ++kept;
            }
            if (kept == 0) feasible = false;
        }
        if (!feasible) continue;
        std::string name;
        for (auto k : subset) {
            if (!name.empty()) name += "+";
            name += to_string(k);
        }
        catalog.spaces.emplace_back(name, parent.without_operators(removed));
    }
    return catalog;
}

} // namespace anglenas
