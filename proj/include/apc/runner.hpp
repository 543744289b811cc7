#pragma once

// Experiment execution: one seed = one private policy + env stack + rng
// streams, driven for total_steps transitions with periodic deterministic
// evaluation. Seeds never share mutable state, so they may run on parallel
// threads; the aggregation pass is single-threaded.

#include <memory>
#include <string>

#include "apc/config.hpp"
#include "apc/metrics.hpp"

namespace apc::harness {

struct RunSummary {
    uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<EvalPoint> evals;
    long episodes = 0;
    double final_running_success = 0;
    double final_eval_return = 0;
    long clamp_count = 0;
    long clip_count = 0;
    // fraction of training steps on which each actor was selected (apc only)
    std::vector<double> selection_fraction;
};

std::string run_prefix(const ExperimentConfig& cfg, uint64_t seed);

// Executes one seed and writes <prefix>_train.csv, <prefix>_eval.csv and
// optionally <prefix>_beta.csv under out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg, uint64_t seed, const std::string& out_dir);

// All configured seeds (jobs > 1 runs them on threads), then the aggregate
// CSV over the seeds that finished. Failed seeds are recorded in
// <name>_failures.csv and do not halt the others.
std::vector<RunSummary> run_all_seeds(const ExperimentConfig& cfg, const std::string& out_dir,
                                      int jobs = 1);

} // namespace apc::harness
