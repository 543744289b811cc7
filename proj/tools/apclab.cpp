// Command-line front door. Subcommands: train-prior, collect-demos, run,
// sweep-temperature, sweep-priors, ablate, report.

#include <CLI11.hpp>
#include <cstdio>

#include "apc/commands.hpp"

using namespace apc::harness;

int main(int argc, char** argv) {
    CLI::App app{"Adaptive policy composition laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, report_dir = "results";
    std::vector<uint64_t> seeds;
    long steps = -1;
    int jobs = 1;

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        if (needs_config)
            sub->add_option("--config", config_path, "config file")->required();
        sub->add_option("--seed", seeds, "seed list override")->delimiter(',');
        sub->add_option("--out", out_dir, "output directory / file override");
        sub->add_option("--steps", steps, "total_steps override");
        sub->add_option("--jobs", jobs, "parallel seed workers");
    };

    auto* train_prior = app.add_subcommand("train-prior", "train a behavior prior from demos");
    add_common(train_prior);
    auto* collect = app.add_subcommand("collect-demos", "roll out a scripted policy into a dataset");
    add_common(collect);
    auto* run = app.add_subcommand("run", "execute one experiment configuration");
    add_common(run);
    auto* sweep_t = app.add_subcommand("sweep-temperature", "arbitrator temperature sweep");
    add_common(sweep_t);
    auto* sweep_p = app.add_subcommand("sweep-priors", "number-of-priors study");
    add_common(sweep_p);
    auto* ablate = app.add_subcommand("ablate", "selector x reward-sharing ablation matrix");
    add_common(ablate);
    auto* report = app.add_subcommand("report", "summarize aggregate CSVs");
    report->add_option("--dir", report_dir, "results directory");

    CLI11_PARSE(app, argc, argv);

    CliOverrides o;
    o.seeds = seeds;
    o.out = out_dir;
    o.steps = steps;
    o.jobs = jobs;

    try {
        if (report->parsed()) return cmd_report(report_dir);
        const Config cfg = Config::parse_file(config_path);
        if (train_prior->parsed()) return cmd_train_prior(cfg, o);
        if (collect->parsed()) return cmd_collect_demos(cfg, o);
        if (run->parsed()) return cmd_run(cfg, o);
        if (sweep_t->parsed()) return cmd_sweep_temperature(cfg, o);
        if (sweep_p->parsed()) return cmd_sweep_priors(cfg, o);
        if (ablate->parsed()) return cmd_ablate(cfg, o);
    } catch (const apc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
