// smcprog command line: run, resume, export, oracle-check.

#include <iostream>

#include "CLI11.hpp"
#include "smcprog/app.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Sequential Monte Carlo program search"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    smcprog::RunOptions options;
    std::string run_dir;
    int stop_after = 0;
    auto* run = app.add_subcommand("run", "Start a run from a config file");
    run->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    auto* seed_opt = run->add_option("--seed", seed, "Override engine.seed");
    run->add_flag("--dry-run", options.dry_run, "Validate and print the plan without running");
    auto* run_dir_opt = run->add_option("--run-dir", run_dir, "Output directory");
    auto* stop_opt = run->add_option("--stop-after-epoch", stop_after, "Stop after this epoch without finishing")
                         ->check(CLI::PositiveNumber);

    std::string resume_dir;
    auto* resume = app.add_subcommand("resume", "Continue an interrupted run from its last checkpoint");
    resume->add_option("run_dir", resume_dir, "Run directory")->required();
    auto* resume_stop = resume->add_option("--stop-after-epoch", stop_after, "Stop after this epoch")
                            ->check(CLI::PositiveNumber);

    std::string export_dir, what = "all";
    auto* exp = app.add_subcommand("export", "Write CSV projections of a run log");
    exp->add_option("run_dir", export_dir, "Run directory")->required();
    exp->add_option("--what", what, "schedule, kernels, flow, best-curve or all");

    std::string suite;
    std::string report;
    auto* oracle = app.add_subcommand("oracle-check", "Check engine properties against exact finite-space results");
    oracle->add_option("suite", suite, "invariance, ergodicity, bridge, theorem1 or all")->required();
    auto* report_opt = oracle->add_option("--report", report, "Also write a JSON report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return smcprog::kExitUsage;
    }

    if (*run) {
        if (*seed_opt) options.seed = seed;
        if (*run_dir_opt) options.run_dir = run_dir;
        if (*stop_opt) options.stop_after_epoch = stop_after;
        return smcprog::cmd_run(config_path, options, std::cout, std::cerr);
    }
    if (*resume) {
        if (*resume_stop) options.stop_after_epoch = stop_after;
        return smcprog::cmd_resume(resume_dir, options, std::cout, std::cerr);
    }
    if (*exp) return smcprog::cmd_export(export_dir, what, std::cout, std::cerr);
    return smcprog::cmd_oracle_check(suite, std::cout, std::cerr,
                                     *report_opt ? std::optional<std::filesystem::path>(report) : std::nullopt);
}
