#include <iostream>

#include "CLI11.hpp"

#include "cli_commands.hpp"
#include "enkmp/errors.hpp"

namespace {

void add_common(CLI::App* sub, enkmp::cli::CommonOptions& opts, std::uint64_t& seed,
                std::string& out)
{
    sub->add_option("--config", opts.config, "Config file (JSON)")->required();
    sub->add_option("--seed", seed, "Overrides the config seed");
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--threads", opts.threads, "Worker threads (sweep)")->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv)
{
    using namespace enkmp::cli;

    CLI::App app{"Ensemble Kalman smoother motion planner"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonOptions opts;
    std::uint64_t seed = 0;
    std::string out;

    auto* train = app.add_subcommand("train", "Train the surrogate vehicle model");
    auto* run = app.add_subcommand("run", "Run a closed-loop scenario");
    auto* baseline = app.add_subcommand("baseline", "Run a scenario with the penalty NMPC baseline");
    auto* sweep = app.add_subcommand("sweep", "Run an ensemble-size / horizon / method matrix");
    for (auto* sub : {train, run, baseline, sweep})
        add_common(sub, opts, seed, out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    for (auto* sub : {train, run, baseline, sweep}) {
        if (sub->count("--seed"))
            opts.seed = seed;
        if (sub->count("--out"))
            opts.out = out;
    }

    try {
        if (*train)
            return cmd_train(opts);
        if (*run)
            return cmd_run(opts);
        if (*baseline)
            return cmd_baseline(opts);
        return cmd_sweep(opts);
    } catch (const enkmp::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
