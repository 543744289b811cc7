#pragma once

// Subcommand implementations behind the CLI: prior pre-training, demo
// collection, experiment execution and the sweep/ablation drivers. Exit
// codes: 0 success, 2 configuration error, 3 runtime failure in any seed.

#include "apc/runner.hpp"

namespace apc::harness {

struct CliOverrides {
    std::vector<uint64_t> seeds; // empty: use the config's list
    std::string out;             // empty: use the config's or "results"
    long steps = -1;             // <0: keep config
    int jobs = 1;
};

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CliOverrides& o);

// Sweep variants, exposed for config-algebra tests: the n = 1 aligned prior
// composition with the exp_neg_dist reward is exactly the aligned-prior
// experiment configuration.
ExperimentConfig temperature_variant(ExperimentConfig base, double eta, bool aligned,
                                     const std::string& aligned_prior,
                                     const std::string& misaligned_prior);
ExperimentConfig priors_variant(ExperimentConfig base, const std::vector<std::string>& goal_priors,
                                int task, int n, bool aligned);

int cmd_train_prior(const Config& c, const CliOverrides& o);
int cmd_collect_demos(const Config& c, const CliOverrides& o);
int cmd_run(const Config& c, const CliOverrides& o);
int cmd_sweep_temperature(const Config& c, const CliOverrides& o);
int cmd_sweep_priors(const Config& c, const CliOverrides& o);
int cmd_ablate(const Config& c, const CliOverrides& o);
int cmd_report(const std::string& dir);

} // namespace apc::harness
