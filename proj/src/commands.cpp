#include "apc/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "apc/demos.hpp"

namespace apc::harness {

namespace fs = std::filesystem;

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CliOverrides& o) {
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (o.steps >= 0) cfg.total_steps = o.steps;
    return cfg;
}

namespace {

std::string out_dir_for(const Config& c, const CliOverrides& o) {
    if (!o.out.empty()) return o.out;
    return c.str_or("experiment", "out", "results");
}

void print_summaries(const ExperimentConfig& cfg, const std::vector<RunSummary>& sums) {
    for (const auto& s : sums) {
        if (s.ok)
            std::printf("[seed %llu] episodes %ld, final running success %.3f, final eval return %.2f\n",
                        static_cast<unsigned long long>(s.seed), s.episodes, s.final_running_success,
                        s.final_eval_return);
        else
            std::printf("[seed %llu] FAILED: %s\n", static_cast<unsigned long long>(s.seed),
                        s.error.c_str());
    }
    std::vector<long> steps;
    std::vector<double> mean_success;
    if (!sums.empty() && sums.front().ok) {
        for (size_t i = 0; i < sums.front().evals.size(); ++i) {
            double m = 0;
            int n = 0;
            for (const auto& s : sums)
                if (s.ok && i < s.evals.size()) {
                    m += s.evals[i].running_success;
                    ++n;
                }
            if (n) {
                steps.push_back(sums.front().evals[i].step);
                mean_success.push_back(m / n);
            }
        }
        const long tts = time_to_success(steps, mean_success, cfg.total_steps);
        std::printf("%s: time-to-success %ld / %ld steps\n", cfg.name.c_str(), tts, cfg.total_steps);
    }
}

int exit_code(const std::vector<RunSummary>& sums) {
    for (const auto& s : sums)
        if (!s.ok) return 3;
    return 0;
}

} // namespace

int cmd_train_prior(const Config& c, const CliOverrides& o) {
    const std::string dataset_path = c.str("flow", "dataset");
    const std::string out_path = o.out.empty() ? c.str("flow", "out_prior") : o.out;
    const uint64_t seed = o.seeds.empty()
                              ? static_cast<uint64_t>(c.integer_or("flow", "seed", 1))
                              : o.seeds[0];
    auto ds = data::load_dataset(dataset_path);
    if (ds.size() == 0) throw ConfigError("train-prior: dataset is empty");
    auto fc = flow_config_from(c);

    std::printf("training prior on %zu pairs (%s/%s), %d epochs\n", ds.size(), ds.env_id.c_str(),
                ds.task_id.c_str(), fc.epochs);
    Rng rng = Rng::stream(seed, "flow-train");
    flow::FlowTrainCurve curve;
    auto prior = flow::train_prior(ds, fc, rng, &curve);
    if (const auto dir = fs::path(out_path).parent_path(); !dir.empty()) fs::create_directories(dir);
    flow::save_prior(prior, out_path);

    CsvWriter csv(out_path + ".curve.csv", {"epoch", "train_nll", "holdout_nll"});
    for (size_t e = 0; e < curve.train_nll.size(); ++e)
        csv.row({static_cast<double>(e + 1), curve.train_nll[e], curve.holdout_nll[e]});
    std::printf("wrote %s (final train nll %.4f, holdout %.4f)\n", out_path.c_str(),
                curve.train_nll.back(), curve.holdout_nll.back());
    return 0;
}

int cmd_collect_demos(const Config& c, const CliOverrides& o) {
    ExperimentConfig probe = experiment_from_config(c); // reuses [env] validation
    const std::string kind = c.str("demos", "policy");
    const int episodes = static_cast<int>(c.integer_or("demos", "episodes", 100));
    const std::string out_path = o.out.empty() ? c.str("demos", "out") : o.out;
    const uint64_t seed = o.seeds.empty()
                              ? static_cast<uint64_t>(c.integer_or("demos", "seed", 1))
                              : o.seeds[0];

    auto env = make_env(probe.env);
    std::unique_ptr<demos::DemoPolicy> policy;
    if (kind == "expert_maze") {
        envs::MazeSpec spec = dynamic_cast<envs::MazeEnv&>(*env).spec();
        policy = std::make_unique<demos::MazeExpert>(spec, probe.env.task);
    } else if (kind == "suboptimal_car") {
        policy = std::make_unique<demos::SuboptimalDriver>(
            c.number_or("demos", "speed_cap", 1.0), c.number_or("demos", "steer_noise", 0.1),
            c.number_or("demos", "throttle_noise", 0.05));
    } else if (kind == "trained") {
        policy = std::make_unique<demos::TrainedPolicy>(c.str("demos", "checkpoint"));
    } else {
        throw ConfigError("demos policy must be expert_maze, suboptimal_car or trained");
    }

    Rng rng = Rng::stream(seed, "demos");
    auto ds = demos::collect_demos(*policy, *env, episodes, rng, probe.env.id,
                                   "task" + std::to_string(probe.env.task));
    if (const auto dir = fs::path(out_path).parent_path(); !dir.empty()) fs::create_directories(dir);
    data::save_dataset(ds, out_path);
    std::printf("collected %u episodes, %zu pairs, success %.2f, mean return %.2f -> %s\n",
                ds.episode_count, ds.size(), ds.success_rate, ds.mean_return, out_path.c_str());
    return 0;
}

int cmd_run(const Config& c, const CliOverrides& o) {
    auto cfg = apply_overrides(experiment_from_config(c), o);
    const std::string out = out_dir_for(c, o);
    auto sums = run_all_seeds(cfg, out, o.jobs);
    print_summaries(cfg, sums);
    return exit_code(sums);
}

ExperimentConfig temperature_variant(ExperimentConfig base, double eta, bool aligned,
                                     const std::string& aligned_prior,
                                     const std::string& misaligned_prior) {
    base.method.method = baselines::Method::apc;
    base.method.eta = eta;
    base.method.priors = {aligned ? aligned_prior : misaligned_prior};
    char tag[64];
    std::snprintf(tag, sizeof tag, "_%s_eta%g", aligned ? "aligned" : "misaligned", eta);
    base.name += tag;
    return base;
}

int cmd_sweep_temperature(const Config& c, const CliOverrides& o) {
    auto base = apply_overrides(experiment_from_config(c), o);
    const std::string out = out_dir_for(c, o);
    const std::string aligned_prior = c.str("sweep", "aligned_prior");
    const std::string misaligned_prior = c.str("sweep", "misaligned_prior");
    std::vector<double> etas = c.num_list_or("sweep", "etas", {0.01, 0.1, 1.0, 10.0, 100.0});

    CsvWriter sweep(out + "/" + base.name + "_sweep.csv",
                    {"aligned", "eta", "step", "mean_success"});
    int rc = 0;
    for (int aligned = 1; aligned >= 0; --aligned) {
        for (double eta : etas) {
            auto cfg = temperature_variant(base, eta, aligned, aligned_prior, misaligned_prior);
            auto sums = run_all_seeds(cfg, out, o.jobs);
            print_summaries(cfg, sums);
            rc = std::max(rc, exit_code(sums));
            if (sums.empty() || !sums.front().ok) continue;
            for (size_t i = 0; i < sums.front().evals.size(); ++i) {
                double m = 0;
                int n = 0;
                for (const auto& s : sums)
                    if (s.ok) {
                        m += s.evals[i].running_success;
                        ++n;
                    }
                sweep.row({static_cast<double>(aligned), eta,
                           static_cast<double>(sums.front().evals[i].step), m / n});
            }
        }
    }
    return rc;
}

ExperimentConfig priors_variant(ExperimentConfig base, const std::vector<std::string>& goal_priors,
                                int task, int n, bool aligned) {
    if (static_cast<size_t>(task) >= goal_priors.size())
        throw ConfigError("priors_variant: task outside the prior list");
    base.method.method = baselines::Method::apc;
    base.env.task = task;
    base.method.priors.clear();
    if (aligned) base.method.priors.push_back(goal_priors[task]);
    for (size_t g = 0; g < goal_priors.size() && static_cast<int>(base.method.priors.size()) < n; ++g)
        if (static_cast<int>(g) != task) base.method.priors.push_back(goal_priors[g]);
    if (static_cast<int>(base.method.priors.size()) != n)
        throw ConfigError("priors_variant: not enough priors for n");
    base.name += std::string("_") + (aligned ? "aligned" : "misaligned") + "_n" + std::to_string(n);
    return base;
}

int cmd_sweep_priors(const Config& c, const CliOverrides& o) {
    auto base = apply_overrides(experiment_from_config(c), o);
    const std::string out = out_dir_for(c, o);
    const auto goal_priors = c.str_list_or("sweep", "priors", {});
    if (goal_priors.size() < 4) throw ConfigError("sweep-priors needs the four goal priors");
    std::vector<double> ns = c.num_list_or("sweep", "n", {1, 2, 3, 4});
    const int task = base.env.task;

    // scratch-SAC reference on the same task
    auto sac_cfg = base;
    sac_cfg.method = MethodConfig{};
    sac_cfg.method.method = baselines::Method::scratch_sac;
    sac_cfg.name += "_sacref";
    auto sac_sums = run_all_seeds(sac_cfg, out, o.jobs);
    print_summaries(sac_cfg, sac_sums);

    auto tts_of = [&](const std::vector<RunSummary>& sums, long budget) {
        std::vector<long> steps;
        std::vector<double> mean;
        if (sums.empty() || !sums.front().ok) return budget;
        for (size_t i = 0; i < sums.front().evals.size(); ++i) {
            double m = 0;
            int k = 0;
            for (const auto& s : sums)
                if (s.ok) {
                    m += s.evals[i].running_success;
                    ++k;
                }
            steps.push_back(sums.front().evals[i].step);
            mean.push_back(m / k);
        }
        return time_to_success(steps, mean, budget);
    };
    const long sac_tts = tts_of(sac_sums, base.total_steps);

    CsvWriter summary(out + "/" + base.name + "_priors_sweep.csv",
                      {"aligned", "n", "time_to_success", "sac_time_to_success"});
    int rc = exit_code(sac_sums);
    for (int aligned = 1; aligned >= 0; --aligned) {
        for (double nd : ns) {
            const int n = static_cast<int>(nd);
            if (!aligned && static_cast<size_t>(n) >= goal_priors.size()) continue; // only 3 misaligned priors exist
            auto cfg = priors_variant(base, goal_priors, task, n, aligned);
            auto sums = run_all_seeds(cfg, out, o.jobs);
            print_summaries(cfg, sums);
            rc = std::max(rc, exit_code(sums));
            summary.row({static_cast<double>(aligned), static_cast<double>(n),
                         static_cast<double>(tts_of(sums, cfg.total_steps)),
                         static_cast<double>(sac_tts)});
        }
    }
    return rc;
}

int cmd_ablate(const Config& c, const CliOverrides& o) {
    auto base = apply_overrides(experiment_from_config(c), o);
    const std::string out = out_dir_for(c, o);
    base.method.method = baselines::Method::apc;
    base.log_decisions = true;

    CsvWriter summary(out + "/" + base.name + "_ablation.csv",
                      {"arbitrator", "sharing", "final_return_median", "prior_selection_fraction"});
    int rc = 0;
    for (int arb = 1; arb >= 0; --arb) {
        for (int share = 1; share >= 0; --share) {
            auto cfg = base;
            cfg.method.selector =
                arb ? ApcConfig::Selector::arbitrator : ApcConfig::Selector::learned;
            cfg.method.reward_sharing = share;
            cfg.name += std::string("_") + (arb ? "arb" : "learned") + (share ? "_share" : "_noshare");
            auto sums = run_all_seeds(cfg, out, o.jobs);
            print_summaries(cfg, sums);
            rc = std::max(rc, exit_code(sums));

            std::vector<double> finals;
            double prior_frac = 0;
            int n_ok = 0;
            for (const auto& s : sums)
                if (s.ok) {
                    finals.push_back(s.final_eval_return);
                    double pf = 0;
                    for (size_t k = 1; k < s.selection_fraction.size(); ++k)
                        pf += s.selection_fraction[k];
                    prior_frac += pf;
                    ++n_ok;
                }
            if (!n_ok) continue;
            std::sort(finals.begin(), finals.end());
            const double median = finals[finals.size() / 2];
            summary.row({static_cast<double>(arb), static_cast<double>(share), median,
                         prior_frac / n_ok});
        }
    }
    return rc;
}

int cmd_report(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().string().ends_with("_aggregate.csv")) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::printf("no aggregate CSVs under %s\n", dir.c_str());
        return 0;
    }
    std::printf("%-48s %10s %14s %12s\n", "experiment", "final_succ", "time_to_succ", "final_ret");
    for (const auto& f : files) {
        auto t = read_csv(f.string());
        if (t.rows.empty()) {
            std::printf("%-48s %10s %14s %12s\n", f.stem().string().c_str(), "-", "-", "-");
            continue;
        }
        const int step_c = t.col("step");
        const int succ_c = t.col("mean_success");
        const int ret_c = t.col("mean_return");
        std::vector<long> steps;
        std::vector<double> succ;
        for (const auto& r : t.rows) {
            steps.push_back(static_cast<long>(r[step_c]));
            succ.push_back(r[succ_c]);
        }
        const long budget = steps.back();
        const long tts = time_to_success(steps, succ, budget);
        std::printf("%-48s %10.3f %14ld %12.2f\n", f.stem().string().c_str(), succ.back(), tts,
                    t.rows.back()[ret_c]);
    }
    return 0;
}

} // namespace apc::harness
