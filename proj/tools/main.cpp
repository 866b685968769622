// anglenas command-line front end: bench / shrink / evaluate / report.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anglenas/anglenas.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    unsigned workers = 0;
    std::vector<std::string> experiments;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_experiments) {
    cmd->add_option("--config", args.config_path, "experiment config file")->required();
    cmd->add_option("--seed", args.seeds, "seed override (repeatable)");
    cmd->add_option("--out", args.out_dir, "output directory override");
    cmd->add_option("--workers", args.workers, "worker count override");
    if (with_experiments)
        cmd->add_option("--experiments", args.experiments,
                        "experiment selection override (comma separated)")
            ->delimiter(',');
}

anglenas::ExperimentConfig load_with_overrides(const CommonArgs& args) {
    anglenas::ExperimentConfig cfg = anglenas::load_config(args.config_path);
    anglenas::ConfigOverrides overrides;
    overrides.seeds = args.seeds;
    overrides.out_dir = args.out_dir;
    if (args.workers > 0) overrides.workers = args.workers;
    overrides.experiments = args.experiments;
    anglenas::apply_overrides(cfg, overrides);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"angle-based search-space shrinking engine"};
    app.require_subcommand(1);

    CommonArgs bench_args, shrink_args, eval_args;
    std::vector<std::string> report_paths;

    CLI::App* bench = app.add_subcommand("bench", "generate the ground-truth benchmark table");
    add_common(bench, bench_args, false);
    CLI::App* shrink = app.add_subcommand("shrink", "run the shrinking loop per seed");
    add_common(shrink, shrink_args, false);
    CLI::App* evaluate = app.add_subcommand("evaluate", "run the experiment suite");
    add_common(evaluate, eval_args, true);
    CLI::App* report = app.add_subcommand("report", "render report files as text");
    report->add_option("files", report_paths, "report JSON files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (bench->parsed()) {
            const auto files = anglenas::cmd_bench(load_with_overrides(bench_args));
            for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
        } else if (shrink->parsed()) {
            const auto results = anglenas::cmd_shrink(load_with_overrides(shrink_args));
            for (const auto& r : results)
                std::cout << "wrote " << r.log.string() << " and " << r.shrunk_space.string()
                          << " (final size " << anglenas::space_size(r.state.space) << ")\n";
        } else if (evaluate->parsed()) {
            const auto files = anglenas::cmd_evaluate(load_with_overrides(eval_args));
            for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
        } else if (report->parsed()) {
            std::vector<std::filesystem::path> paths(report_paths.begin(), report_paths.end());
            anglenas::cmd_report(paths, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
