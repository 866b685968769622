#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "anglenas/bench.hpp"
#include "anglenas/dataset.hpp"
#include "anglenas/shrink.hpp"

namespace anglenas {

constexpr const char* kConfigSchema = "anglenas-config-v1";

struct EvaluateConfig {
    std::filesystem::path benchmark; // ground-truth table path
    std::vector<std::string> experiments;
    std::size_t ranking_seeds = 10;
    std::size_t stability_seeds = 5;
    std::vector<std::uint64_t> probe_epochs = {0, 1, 2, 3, 5, 10, 20, 40, 60};
    std::size_t timing_children = 100;
    std::size_t timing_repetitions = 5;
    std::uint32_t selection_drop = 6;
    std::size_t selection_seeds = 3;
    std::size_t search_budget = 50;
    std::size_t search_trials = 20;
};

// One static config file per invocation; the CLI may override seeds, output
// directory, worker count and experiment selection.
struct ExperimentConfig {
    nlohmann::json raw; // effective config after overrides
    std::filesystem::path base_dir;
    std::filesystem::path space_path;
    std::filesystem::path out_dir = "out";
    std::vector<std::uint64_t> seeds = {1};
    unsigned workers = 1;
    std::string dataset_cache; // optional on-disk dataset prefix

    RingsConfig data;
    TrainConfig train;
    BenchmarkConfig bench;
    ShrinkConfig shrink;
    EvaluateConfig evaluate;

    std::uint64_t hash() const {
        const std::string dump = raw.dump();
        std::uint64_t h = 1469598103934665603ULL;
        for (char c : dump) {
            h ^= std::uint8_t(c);
            h *= 1099511628211ULL;
        }
        return h;
    }

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        if (p.is_absolute()) return p;
        return base_dir / p;
    }

    SupernetGraph load_space() const { return SupernetGraph::load(resolve(space_path)); }
};

namespace detail {

inline TrainConfig parse_train(const nlohmann::json& j, TrainConfig base = {}) {
    TrainConfig t = base;
    t.first_stage_epochs = j.value("first_stage_epochs", t.first_stage_epochs);
    t.later_stage_epochs = j.value("later_stage_epochs", t.later_stage_epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.lr = j.value("lr", t.lr);
    t.min_lr = j.value("min_lr", t.min_lr);
    t.schedule = j.value("schedule", t.schedule);
    t.momentum = j.value("momentum", t.momentum);
    if (j.contains("init")) t.init = init_policy_from_string(j["init"].get<std::string>());
    t.validate();
    return t;
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir) {
    if (!j.contains("schema") || j["schema"] != kConfigSchema)
        throw ConfigError("config: missing or unsupported schema id");
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.base_dir = base_dir;
    cfg.space_path = j.at("space").get<std::string>();
    cfg.out_dir = j.value("out_dir", std::string("out"));
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("config: seeds list must be nonempty");
    cfg.workers = j.value("workers", 1u);
    if (j.contains("data")) {
        const auto& d = j["data"];
        cfg.data.train_size = d.value("train_size", cfg.data.train_size);
        cfg.data.val_size = d.value("val_size", cfg.data.val_size);
        cfg.data.classes = d.value("classes", cfg.data.classes);
        cfg.data.noise = d.value("noise", cfg.data.noise);
        cfg.data.seed = d.value("seed", cfg.data.seed);
        cfg.dataset_cache = d.value("cache_prefix", std::string());
    }
    if (j.contains("train")) cfg.train = detail::parse_train(j["train"]);
    cfg.bench.train = cfg.train;
    cfg.bench.train.first_stage_epochs = 40;
    if (j.contains("bench")) {
        const auto& b = j["bench"];
        cfg.bench.child_cap = b.value("child_cap", cfg.bench.child_cap);
        TrainConfig bt = cfg.bench.train;
        bt.first_stage_epochs = b.value("epochs", bt.first_stage_epochs);
        cfg.bench.train = detail::parse_train(b, bt);
        if (b.contains("epochs")) cfg.bench.train.first_stage_epochs = b["epochs"].get<std::size_t>();
    }
    if (j.contains("shrink")) {
        const auto& s = j["shrink"];
        cfg.shrink.threshold = s.value("threshold", cfg.shrink.threshold);
        cfg.shrink.drop_per_iter = s.value("drop_per_iter", cfg.shrink.drop_per_iter);
        cfg.shrink.samples_per_op = s.value("samples_per_op", cfg.shrink.samples_per_op);
        cfg.shrink.reset_after = s.value("reset_after", cfg.shrink.reset_after);
        cfg.shrink.max_removals = s.value("max_removals", cfg.shrink.max_removals);
        if (s.contains("metric"))
            cfg.shrink.metric = shrink_metric_from_string(s["metric"].get<std::string>());
        if (s.contains("vector_mode"))
            cfg.shrink.vector_mode = vector_mode_from_string(s["vector_mode"].get<std::string>());
        cfg.shrink.path_cap = s.value("path_cap", cfg.shrink.path_cap);
        if (s.contains("param_band"))
            cfg.shrink.param_band = {s["param_band"][0].get<std::uint64_t>(),
                                     s["param_band"][1].get<std::uint64_t>()};
    }
    cfg.shrink.train = cfg.train;
    if (j.contains("evaluate")) {
        const auto& e = j["evaluate"];
        if (e.contains("benchmark")) cfg.evaluate.benchmark = e["benchmark"].get<std::string>();
        if (e.contains("experiments"))
            cfg.evaluate.experiments = e["experiments"].get<std::vector<std::string>>();
        cfg.evaluate.ranking_seeds = e.value("ranking_seeds", cfg.evaluate.ranking_seeds);
        cfg.evaluate.stability_seeds = e.value("stability_seeds", cfg.evaluate.stability_seeds);
        if (e.contains("probe_epochs"))
            cfg.evaluate.probe_epochs = e["probe_epochs"].get<std::vector<std::uint64_t>>();
        cfg.evaluate.timing_children = e.value("timing_children", cfg.evaluate.timing_children);
        cfg.evaluate.timing_repetitions =
            e.value("timing_repetitions", cfg.evaluate.timing_repetitions);
        cfg.evaluate.selection_drop = e.value("selection_drop", cfg.evaluate.selection_drop);
        cfg.evaluate.selection_seeds = e.value("selection_seeds", cfg.evaluate.selection_seeds);
        cfg.evaluate.search_budget = e.value("search_budget", cfg.evaluate.search_budget);
        cfg.evaluate.search_trials = e.value("search_trials", cfg.evaluate.search_trials);
    }
    cfg.shrink.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    ExperimentConfig cfg = parse_config(j, path.parent_path());
    const auto space_file = cfg.resolve(cfg.space_path);
    if (!std::filesystem::exists(space_file))
        throw ConfigError("config references a missing space file: " + space_file.string());
    return cfg;
}

struct ConfigOverrides {
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    std::optional<unsigned> workers;
    std::vector<std::string> experiments;
};

inline void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
    if (!o.seeds.empty()) {
        cfg.seeds = o.seeds;
        cfg.raw["seeds"] = o.seeds;
    }
    if (!o.out_dir.empty()) {
        cfg.out_dir = o.out_dir;
        cfg.raw["out_dir"] = o.out_dir;
    }
    if (o.workers) {
        cfg.workers = *o.workers;
        cfg.raw["workers"] = *o.workers;
    }
    if (!o.experiments.empty()) {
        cfg.evaluate.experiments = o.experiments;
        cfg.raw["evaluate"]["experiments"] = o.experiments;
    }
}

} // namespace anglenas
