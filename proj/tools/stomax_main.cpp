#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "stomax/config.hpp"
#include "stomax/error.hpp"
#include "stomax/run.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Stochastic Maxwell time-integration experiments"};
    app.set_version_flag("--version", stomax::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    for (const auto& kind : stomax::experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "Run the " + kind + " experiment");
        sub->add_option("--config", config_path, "Experiment config file")->required();
        sub->add_option("--out", out_dir, "Output directory (overrides output.directory)");
        sub->add_option("--seed", seed, "Master seed (overrides experiment.seed)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : stomax::kExitConfig;
    }
    const std::string kind = app.get_subcommands().front()->get_name();

    stomax::ExperimentConfig cfg;
    try {
        cfg = stomax::parse_config(config_path);
        if (cfg.kind != kind) {
            throw stomax::ConfigError("experiment.kind: config declares '" + cfg.kind + "' but subcommand is '" +
                                      kind + "'");
        }
        if (out_dir) cfg.output_dir = *out_dir;
        if (seed) cfg.seed = *seed;
    } catch (...) {
        const auto r = stomax::classify_failure("parse", std::current_exception());
        std::cerr << r.failure_tag << '\n';
        return r.exit_code;
    }
    return stomax::run(cfg, std::cerr).exit_code;
}
