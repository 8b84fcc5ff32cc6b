// splitkit: run splitting-scheme experiments from JSON configs.
//
//   splitkit run <config.json> [--out DIR] [--seed N] [--quiet]
//   splitkit orders <config.json> [--out DIR]
//   splitkit suite <dir> [--out DIR]
//
// Exit codes: 0 ok, 2 config error, 3 divergence, 4 solver failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "splitkit/experiment.hpp"

namespace {

int run_single(const std::string& path, const splitkit::RunOptions& options, bool orders) {
    try {
        const splitkit::ExperimentConfig config = splitkit::load_experiment_config(path);
        return orders ? splitkit::run_orders(config, options) : splitkit::run_experiment(config, options);
    } catch (const splitkit::ConfigError& e) {
        std::cerr << path << ": " << e.what() << '\n';
        return splitkit::kExitConfig;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Additive operator-difference splitting schemes for parabolic problems"};
    app.require_subcommand(1);

    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    bool quiet = false;
    app.add_option("--out", out_dir, "Output directory")->capture_default_str();
    app.add_option("--seed", seed, "Override the seed of RANDOM initial data");
    app.add_flag("--quiet", quiet, "Suppress progress output");

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("config", config_path, "Experiment JSON")->required();
    auto* orders = app.add_subcommand("orders", "Run the tau-halving ladder and fit the order");
    orders->add_option("config", config_path, "Experiment JSON")->required();
    std::string suite_dir;
    auto* suite = app.add_subcommand("suite", "Run every *.json in a directory");
    suite->add_option("dir", suite_dir, "Directory of experiment configs")->required();

    for (auto* sub : {run, orders, suite}) {
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--seed", seed, "Override the seed of RANDOM initial data");
        sub->add_flag("--quiet", quiet, "Suppress progress output");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : splitkit::kExitConfig;
    }

    splitkit::RunOptions options;
    options.out_dir = out_dir;
    options.seed = seed;
    options.quiet = quiet;

    try {
        if (*run) return run_single(config_path, options, false);
        if (*orders) return run_single(config_path, options, true);
        return splitkit::run_suite(suite_dir, options, splitkit::batch_threads_from_env());
    } catch (const std::exception& e) {
        std::cerr << "splitkit: " << e.what() << '\n';
        return splitkit::kExitSolver;
    }
}
