#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "anglenas/config.hpp"
#include "anglenas/evalstats.hpp"
#include "anglenas/search.hpp"

namespace anglenas {

constexpr const char* kReportSchema = "anglenas-report-v1";

namespace detail {

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline nlohmann::json report_envelope(const std::string& kind, const ExperimentConfig& cfg,
                                      std::uint64_t seed) {
    return nlohmann::json{{"schema", kReportSchema},
                          {"kind", kind},
                          {"config_hash", cfg.hash()},
                          {"seed", seed}};
}

inline DataBundle load_or_make_data(const ExperimentConfig& cfg) {
    if (!cfg.dataset_cache.empty()) {
        const auto prefix = cfg.resolve(cfg.dataset_cache);
        const auto train_path = prefix.string() + "_train.bin";
        const auto val_path = prefix.string() + "_val.bin";
        if (std::filesystem::exists(train_path) && std::filesystem::exists(val_path))
            return {load_dataset(train_path), load_dataset(val_path)};
        DataBundle data = make_rings(cfg.data);
        std::filesystem::create_directories(prefix.parent_path().empty() ? "."
                                                                         : prefix.parent_path());
        save_dataset(data.train, train_path);
        save_dataset(data.val, val_path);
        return data;
    }
    return make_rings(cfg.data);
}

inline nlohmann::json operator_id_json(OperatorId id) {
    return nlohmann::json::array({id.edge, id.slot});
}

} // namespace detail

// --- bench -------------------------------------------------------------------

inline std::filesystem::path bench_table_path(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (!cfg.evaluate.benchmark.empty() && cfg.seeds.size() == 1 && seed == cfg.seeds[0])
        return std::filesystem::path(cfg.evaluate.benchmark);
    return cfg.out_dir / ("bench_seed" + std::to_string(seed) + ".json");
}

// Generates the ground-truth table for every configured seed. Idempotent per
// (space hash, seed): an existing table file is never overwritten (the table
// embeds the space hash, so a stale file can never be misread either).
inline std::vector<std::filesystem::path> cmd_bench(const ExperimentConfig& cfg) {
    const SupernetGraph space = cfg.load_space();
    const DataBundle data = detail::load_or_make_data(cfg);
    std::vector<std::filesystem::path> written;
    for (const auto seed : cfg.seeds) {
        const auto table_path = bench_table_path(cfg, seed);
        if (std::filesystem::exists(table_path))
            throw IoFailure("benchmark table already exists, refusing to overwrite: " +
                            table_path.string());
        const GroundTruthTable table =
            generate_benchmark(space, cfg.bench, data, seed, cfg.workers);
        std::filesystem::create_directories(cfg.out_dir);
        nlohmann::json table_json = table_to_json(table);
        table_json["config_hash"] = cfg.hash();
        detail::write_json_file(table_json, table_path);
        double lo = 1.0, hi = 0.0, sum = 0.0;
        for (const auto& r : table.records) {
            lo = std::min(lo, r.accuracy);
            hi = std::max(hi, r.accuracy);
            sum += r.accuracy;
        }
        nlohmann::json summary = detail::report_envelope("bench-summary", cfg, seed);
        summary["space_hash"] = space.hash();
        summary["records"] = table.records.size();
        summary["accuracy_min"] = lo;
        summary["accuracy_max"] = hi;
        summary["accuracy_mean"] = sum / double(table.records.size());
        summary["table"] = table_path.string();
        detail::write_json_file(summary,
                                cfg.out_dir / ("bench_summary_seed" + std::to_string(seed) +
                                               ".json"));
        written.push_back(table_path);
    }
    return written;
}

// --- shrink -------------------------------------------------------------------

struct ShrinkArtifacts {
    std::filesystem::path log;
    std::filesystem::path shrunk_space;
    ShrinkState state;
};

inline std::vector<ShrinkArtifacts> cmd_shrink(const ExperimentConfig& cfg) {
    const SupernetGraph space = cfg.load_space();
    const DataBundle data = detail::load_or_make_data(cfg);
    std::optional<GroundTruthTable> table;
    if (cfg.shrink.metric == ShrinkMetric::ground_truth) {
        const auto table_path =
            cfg.evaluate.benchmark.empty()
                ? cfg.out_dir / ("bench_seed" + std::to_string(cfg.seeds[0]) + ".json")
                : std::filesystem::path(cfg.evaluate.benchmark);
        table = load_table(table_path, space);
    }
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<ShrinkArtifacts> results;
    for (const auto seed : cfg.seeds) {
        ShrinkState state = run_abs(space, cfg.shrink, data, seed, nullptr,
                                    table ? &*table : nullptr, cfg.workers);
        ShrinkArtifacts art{cfg.out_dir / ("shrink_seed" + std::to_string(seed) + ".jsonl"),
                            cfg.out_dir / ("shrunk_space_seed" + std::to_string(seed) + ".json"),
                            std::move(state)};
        save_shrink_log(art.state, art.log, cfg.hash(), seed);
        nlohmann::json space_json = art.state.space.to_json();
        space_json["config_hash"] = cfg.hash();
        space_json["seed"] = seed;
        detail::write_json_file(space_json, art.shrunk_space);
        nlohmann::json summary = detail::report_envelope("shrink-summary", cfg, seed);
        summary["iterations"] = art.state.log.size();
        summary["removed_total"] = art.state.removed_total;
        summary["final_size"] = space_size(art.state.space);
        summary["stop_reason"] = art.state.stop_reason;
        summary["log"] = art.log.string();
        summary["shrunk_space"] = art.shrunk_space.string();
        detail::write_json_file(summary, cfg.out_dir / ("shrink_summary_seed" +
                                                        std::to_string(seed) + ".json"));
        results.push_back(std::move(art));
    }
    return results;
}

// --- evaluate -----------------------------------------------------------------

namespace detail {

inline nlohmann::json run_ranking_experiment(const ExperimentConfig& cfg,
                                             const SupernetGraph& space,
                                             const GroundTruthTable& table,
                                             const DataBundle& data) {
    const std::uint64_t seed0 = cfg.seeds[0];
    nlohmann::json per_seed = nlohmann::json::array();
    std::vector<double> angle_taus, acc_taus, random_taus;
    for (std::size_t i = 0; i < cfg.evaluate.ranking_seeds; ++i) {
        const std::uint64_t seed = Rng::mix(seed0, 1000 + i);
        WeightStore store = init_supernet(space, cfg.train.init, seed);
        for (std::size_t e = 0; e < cfg.train.first_stage_epochs; ++e)
            train_epoch(store, space, data.train, cfg.train, e, cfg.train.first_stage_epochs);
        Rng rank_rng(Rng::mix(seed, 0x72616e6bULL));
        const RankingReport angle = rank_children_by_metric(
            space, table, RankMetric::angle, store, data, rank_rng, cfg.shrink.vector_mode,
            cfg.shrink.path_cap, cfg.workers);
        const RankingReport acc = rank_children_by_metric(
            space, table, RankMetric::accuracy_rebn, store, data, rank_rng,
            cfg.shrink.vector_mode, cfg.shrink.path_cap, cfg.workers);
        const RankingReport rnd = rank_children_by_metric(
            space, table, RankMetric::random, store, data, rank_rng, cfg.shrink.vector_mode,
            cfg.shrink.path_cap, cfg.workers);
        angle_taus.push_back(angle.tau);
        acc_taus.push_back(acc.tau);
        random_taus.push_back(rnd.tau);
        per_seed.push_back({{"seed", seed},
                            {"angle_tau", angle.tau},
                            {"accuracy_tau", acc.tau},
                            {"random_tau", rnd.tau},
                            {"angle_ties", angle.tied_pairs},
                            {"angle_zero_signal_children", angle.zero_signal_children},
                            {"angle_degenerate", angle.degenerate}});
    }
    const auto agg = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= double(v.size());
        double sq = 0.0;
        for (double x : v) sq += (x - mean) * (x - mean);
        const double stddev = v.size() >= 2 ? std::sqrt(sq / double(v.size() - 1)) : 0.0;
        return std::pair<double, double>{mean, stddev};
    };
    const auto [angle_mean, angle_std] = agg(angle_taus);
    const auto [acc_mean, acc_std] = agg(acc_taus);
    const auto [rnd_mean, rnd_std] = agg(random_taus);
    nlohmann::json j;
    j["per_seed"] = per_seed;
    j["angle_tau_mean"] = angle_mean;
    j["angle_tau_std"] = angle_std;
    j["accuracy_tau_mean"] = acc_mean;
    j["accuracy_tau_std"] = acc_std;
    j["random_tau_mean"] = rnd_mean;
    j["random_tau_std"] = rnd_std;
    j["angle_exceeds_random_by_3_std"] = angle_mean > rnd_mean + 3.0 * rnd_std;
    j["angle_at_least_accuracy"] = angle_mean >= acc_mean; // direction, not gated
    return j;
}

inline nlohmann::json run_timing_experiment(const ExperimentConfig& cfg,
                                            const SupernetGraph& space,
                                            const GroundTruthTable& table,
                                            const DataBundle& data) {
    const std::uint64_t seed = Rng::mix(cfg.seeds[0], 3000);
    WeightStore store = init_supernet(space, cfg.train.init, seed);
    for (std::size_t e = 0; e < cfg.train.first_stage_epochs; ++e)
        train_epoch(store, space, data.train, cfg.train, e, cfg.train.first_stage_epochs);
    std::vector<std::size_t> idx(table.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng pick_rng(Rng::mix(seed, 1));
    pick_rng.shuffle(idx);
    const std::size_t n = std::min(cfg.evaluate.timing_children, idx.size());
    std::vector<ChildModel> children;
    for (std::size_t i = 0; i < n; ++i)
        children.push_back(child_from_encoding(space, table.records[idx[i]].encoding));
    const auto [angle_t, acc_t] = timing_comparison(children, store, data,
                                                    cfg.evaluate.timing_repetitions,
                                                    cfg.shrink.vector_mode, cfg.shrink.path_cap);
    nlohmann::json j;
    j["children"] = angle_t.children;
    j["repetitions"] = angle_t.repetitions;
    j["angle_seconds_mean"] = angle_t.mean_seconds;
    j["angle_seconds_std"] = angle_t.stddev_seconds;
    j["accuracy_seconds_mean"] = acc_t.mean_seconds;
    j["accuracy_seconds_std"] = acc_t.stddev_seconds;
    j["speedup"] = acc_t.mean_seconds / std::max(angle_t.mean_seconds, 1e-12);
    return j;
}

inline nlohmann::json run_search_experiment(const ExperimentConfig& cfg,
                                            const SupernetGraph& space,
                                            const GroundTruthTable& table,
                                            const DataBundle& data) {
    const std::uint64_t seed0 = cfg.seeds[0];
    ShrinkConfig shrink_cfg = cfg.shrink;
    shrink_cfg.metric = ShrinkMetric::angle;
    const ShrinkState abs_state =
        run_abs(space, shrink_cfg, data, Rng::mix(seed0, 5000), nullptr, nullptr, cfg.workers);
    std::vector<std::pair<std::string, const SupernetGraph*>> spaces;
    spaces.emplace_back("original", &space);
    spaces.emplace_back("abs-shrunk", &abs_state.space);
    const ShrunkSpaceCatalog catalog = make_kind_subset_catalog(space);
    for (const auto& [name, sub] : catalog.spaces)
        if (sub.hash() != space.hash()) spaces.emplace_back("subset:" + name, &sub);
    nlohmann::json rows = nlohmann::json::array();
    double original_random_mean = 0.0, abs_random_mean = 0.0;
    for (const auto& [name, sub] : spaces) {
        const SpaceSearchSummary s = summarize_space_search(
            name, table, *sub, cfg.evaluate.search_budget, cfg.evaluate.search_trials, seed0);
        if (name == "original") original_random_mean = s.random_mean;
        if (name == "abs-shrunk") abs_random_mean = s.random_mean;
        rows.push_back({{"space", s.space_name},
                        {"size", s.space_size},
                        {"children", s.children_in_table},
                        {"exhaustive_best", s.exhaustive_best},
                        {"random_mean", s.random_mean},
                        {"random_std", s.random_std},
                        {"evolution_mean", s.evolution_mean},
                        {"evolution_std", s.evolution_std}});
    }
    nlohmann::json j;
    j["budget"] = cfg.evaluate.search_budget;
    j["trials"] = cfg.evaluate.search_trials;
    j["spaces"] = rows;
    // exhaustive max over a subspace can never beat the full space; budgeted
    // searchers are where shrinking can help
    j["note"] = "subspace exhaustive best <= original exhaustive best by construction; "
                "compare budgeted searchers instead";
    j["abs_shrunk_random_minus_original"] = abs_random_mean - original_random_mean;
    return j;
}

} // namespace detail

// Runs the selected experiments against an existing benchmark table and
// writes one report file per experiment plus an overall summary.
inline std::vector<std::filesystem::path> cmd_evaluate(const ExperimentConfig& cfg) {
    const SupernetGraph space = cfg.load_space();
    const DataBundle data = detail::load_or_make_data(cfg);
    const auto table_path = cfg.evaluate.benchmark.empty()
                                ? cfg.out_dir / ("bench_seed" + std::to_string(cfg.seeds[0]) +
                                                 ".json")
                                : std::filesystem::path(cfg.evaluate.benchmark);
    const GroundTruthTable table = load_table(table_path, space);
    std::filesystem::create_directories(cfg.out_dir);
    const std::uint64_t seed0 = cfg.seeds[0];
    std::vector<std::filesystem::path> written;
    nlohmann::json ran = nlohmann::json::array();

    for (const auto& experiment : cfg.evaluate.experiments) {
        nlohmann::json report = detail::report_envelope(experiment, cfg, seed0);
        if (experiment == "ranking") {
            report.update(detail::run_ranking_experiment(cfg, space, table, data));
        } else if (experiment == "stability") {
            std::vector<std::uint64_t> seeds;
            for (std::size_t i = 0; i < cfg.evaluate.stability_seeds; ++i)
                seeds.push_back(Rng::mix(seed0, 2000 + i));
            const StabilityReport r =
                stability_report(space, table, cfg.train, data, seeds, cfg.shrink.vector_mode,
                                 cfg.shrink.path_cap, cfg.workers);
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& e : r.entries)
                entries.push_back({{"metric", e.metric},
                                   {"taus", e.taus},
                                   {"mean", e.mean},
                                   {"std", e.stddev},
                                   {"range", e.range}});
            report["entries"] = entries;
            report["seeds"] = r.seeds;
        } else if (experiment == "convergence") {
            const auto curve = convergence_curve(
                space, table, cfg.train, data, {RankMetric::angle, RankMetric::accuracy_rebn},
                cfg.evaluate.probe_epochs, seed0, cfg.shrink.vector_mode, cfg.shrink.path_cap,
                cfg.workers);
            nlohmann::json points = nlohmann::json::array();
            for (const auto& p : curve) {
                nlohmann::json taus;
                for (const auto& [metric, tau] : p.taus) taus[metric] = tau;
                nlohmann::json degenerate;
                for (const auto& [metric, d] : p.degenerate) degenerate[metric] = d;
                points.push_back(
                    {{"epoch", p.epoch}, {"taus", taus}, {"degenerate", degenerate}});
            }
            report["points"] = points;
        } else if (experiment == "timing") {
            report.update(detail::run_timing_experiment(cfg, space, table, data));
        } else if (experiment == "selection") {
            std::vector<std::uint64_t> seeds;
            for (std::size_t i = 0; i < cfg.evaluate.selection_seeds; ++i)
                seeds.push_back(Rng::mix(seed0, 4000 + i));
            const SelectionReport r =
                operator_selection_report(space, table, cfg.shrink, cfg.evaluate.selection_drop,
                                          seeds, data, cfg.workers);
            nlohmann::json gt = nlohmann::json::array();
            for (const auto& [id, score] : r.gt_scores)
                gt.push_back({{"op", detail::operator_id_json(id)}, {"gt_score", score}});
            nlohmann::json runs = nlohmann::json::array();
            for (const auto& run : r.runs) {
                nlohmann::json removed = nlohmann::json::array();
                for (const auto id : run.removed) removed.push_back(detail::operator_id_json(id));
                nlohmann::json reserved = nlohmann::json::array();
                for (const auto id : run.reserved)
                    reserved.push_back(detail::operator_id_json(id));
                runs.push_back({{"metric", run.metric},
                                {"seed", run.seed},
                                {"removed", removed},
                                {"reserved", reserved},
                                {"reserved_mean_gt", run.reserved_mean_gt},
                                {"removed_mean_gt", run.removed_mean_gt},
                                {"top_overlap", run.top_overlap}});
            }
            report["drop_count"] = r.drop_count;
            report["gt_ranking"] = gt;
            report["runs"] = runs;
        } else if (experiment == "search") {
            report.update(detail::run_search_experiment(cfg, space, table, data));
        } else {
            throw ConfigError("unknown experiment: " + experiment);
        }
        const auto path = cfg.out_dir / ("report_" + experiment + ".json");
        detail::write_json_file(report, path);
        written.push_back(path);
        ran.push_back(experiment);
    }

    nlohmann::json summary = detail::report_envelope("evaluate-summary", cfg, seed0);
    summary["experiments"] = ran;
    summary["status"] = cfg.evaluate.experiments.empty() ? "no-op" : "complete";
    detail::write_json_file(summary, cfg.out_dir / "evaluate_summary.json");
    written.push_back(cfg.out_dir / "evaluate_summary.json");
    return written;
}

// --- report rendering -----------------------------------------------------------

namespace detail {

inline void print_kv(std::ostream& os, const nlohmann::json& j, const char* key) {
    if (j.contains(key)) os << "  " << key << ": " << j[key].dump() << "\n";
}

} // namespace detail

// Pretty-prints a report file produced by bench/shrink/evaluate.
inline void render_report(const std::filesystem::path& path, std::ostream& os) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open report: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure("report " + path.string() + ": " + e.what());
    }
    const std::string kind = j.value("kind", std::string("?"));
    os << "== " << kind << " (" << path.filename().string() << ")\n";
    os << "  config_hash: " << detail::hex64(j.value("config_hash", std::uint64_t(0))) << "  seed: "
       << j.value("seed", std::uint64_t(0)) << "\n";
    if (kind == "ranking") {
        os << "  metric            tau_mean    tau_std\n";
        os << "  angle           " << std::setw(10) << j["angle_tau_mean"].get<double>()
           << " " << std::setw(10) << j["angle_tau_std"].get<double>() << "\n";
        os << "  accuracy-rebn   " << std::setw(10) << j["accuracy_tau_mean"].get<double>()
           << " " << std::setw(10) << j["accuracy_tau_std"].get<double>() << "\n";
        os << "  random          " << std::setw(10) << j["random_tau_mean"].get<double>()
           << " " << std::setw(10) << j["random_tau_std"].get<double>() << "\n";
        detail::print_kv(os, j, "angle_exceeds_random_by_3_std");
        detail::print_kv(os, j, "angle_at_least_accuracy");
    } else if (kind == "stability") {
        os << "  metric            mean       std        range\n";
        for (const auto& e : j["entries"])
            os << "  " << std::left << std::setw(16) << e["metric"].get<std::string>()
               << std::right << std::setw(9) << e["mean"].get<double>() << " " << std::setw(10)
               << e["std"].get<double>() << " " << std::setw(10) << e["range"].get<double>()
               << "\n";
    } else if (kind == "convergence") {
        os << "  epoch   taus\n";
        for (const auto& p : j["points"])
            os << "  " << std::setw(5) << p["epoch"].get<std::uint64_t>() << "   "
               << p["taus"].dump() << "\n";
    } else if (kind == "timing") {
        os << "  angle:         " << j["angle_seconds_mean"].get<double>() << " s (+/- "
           << j["angle_seconds_std"].get<double>() << ")\n";
        os << "  accuracy-rebn: " << j["accuracy_seconds_mean"].get<double>() << " s (+/- "
           << j["accuracy_seconds_std"].get<double>() << ")\n";
        os << "  speedup:       " << j["speedup"].get<double>() << "x\n";
    } else if (kind == "selection") {
        os << "  drop_count: " << j["drop_count"] << "\n";
        os << "  metric         seed                reserved_gt  removed_gt  top_overlap\n";
        for (const auto& r : j["runs"])
            os << "  " << std::left << std::setw(13) << r["metric"].get<std::string>()
               << std::right << std::setw(20) << r["seed"].get<std::uint64_t>() << " "
               << std::setw(11) << r["reserved_mean_gt"].get<double>() << " " << std::setw(11)
               << r["removed_mean_gt"].get<double>() << " " << std::setw(8)
               << r["top_overlap"].get<std::size_t>() << "\n";
    } else if (kind == "search") {
        os << "  space                     size  children  exh_best  rand_mean  evo_mean\n";
        for (const auto& s : j["spaces"])
            os << "  " << std::left << std::setw(24) << s["space"].get<std::string>()
               << std::right << std::setw(6) << s["size"].get<std::uint64_t>() << " "
               << std::setw(9) << s["children"].get<std::size_t>() << " " << std::setw(9)
               << s["exhaustive_best"].get<double>() << " " << std::setw(10)
               << s["random_mean"].get<double>() << " " << std::setw(9)
               << s["evolution_mean"].get<double>() << "\n";
        detail::print_kv(os, j, "abs_shrunk_random_minus_original");
    } else {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (it.key() != "schema" && it.key() != "kind")
                os << "  " << it.key() << ": " << it.value().dump() << "\n";
    }
}

inline void cmd_report(const std::vector<std::filesystem::path>& paths, std::ostream& os) {
    for (const auto& p : paths) render_report(p, os);
}

} // namespace anglenas
