#include "apc/runner.hpp"

#include <deque>
#include <filesystem>
#include <thread>

#include "apc/baselines.hpp"
#include "apc/demos.hpp"

namespace apc::harness {

namespace {

using baselines::Method;

// Common face of the four method families for the step loop.
class Agent {
public:
    virtual ~Agent() = default;
    virtual int n_actors() const = 0;
    virtual void act(const float* obs, int obs_dim, std::vector<float>& action) = 0;
    virtual void observe(const float* obs, int obs_dim, const std::vector<float>& action, float r,
                         const float* obs_next, bool terminated, bool truncated) = 0;
    virtual void update(float* critic_loss, float* actor_loss) = 0;
    virtual void eval_action(const float* obs, int obs_dim, std::vector<float>& action) = 0;
    virtual int last_beta() const { return 0; }
    virtual size_t buffer_size(int actor) const = 0;
    virtual long clamp_count() const { return 0; }
    virtual long clip_count() const { return 0; }
};

// sac (no priors, pinned to the prior-free actor) and apc
class ApcAgent final : public Agent {
public:
    ApcAgent(const ExperimentConfig& cfg, uint64_t seed, const std::vector<double>& obs_scale,
             int obs_dim, int act_dim) {
        sac::SacConfig<float> free_cfg = base_sac(cfg, obs_scale, obs_dim, act_dim);
        free_cfg.z_max = 1.0f;
        sac::SacConfig<float> prior_cfg = free_cfg;

        std::vector<std::shared_ptr<flow::FlowPrior<double>>> priors;
        for (const auto& path : cfg.method.priors) {
            auto p = std::make_shared<flow::FlowPrior<double>>(flow::load_prior<double>(path));
            if (p->action_dim != act_dim || p->state_dim != obs_dim)
                throw ContractError("prior dimensions do not match the environment: " + path);
            priors.push_back(std::move(p));
        }
        if (!priors.empty())
            prior_cfg.z_max = 3.0f * std::sqrt(static_cast<float>(priors[0]->base_var));

        ApcConfig acfg;
        acfg.eta = cfg.method.eta;
        acfg.reward_sharing = cfg.method.reward_sharing;
        acfg.selector = cfg.method.selector;
        if (cfg.method.method == Method::scratch_sac) acfg.pin_beta = 0;
        policy_ = ApcPolicy::make(free_cfg, prior_cfg, priors, acfg, seed);
        for (size_t i = 0; i < priors.size(); ++i)
            policy_.actors[i + 1].ac.cfg.z_max = 3.0f * std::sqrt(static_cast<float>(priors[i]->base_var));
        learned_ = cfg.method.selector == ApcConfig::Selector::learned &&
                   cfg.method.method == Method::apc;
    }

    static sac::SacConfig<float> base_sac(const ExperimentConfig& cfg,
                                          const std::vector<double>& obs_scale, int obs_dim,
                                          int act_dim) {
        sac::SacConfig<float> s;
        s.obs_dim = obs_dim;
        s.latent_dim = act_dim;
        s.gamma = cfg.sac.gamma;
        s.tau = cfg.sac.tau;
        s.alpha = cfg.sac.alpha;
        s.batch_size = cfg.sac.batch_size;
        s.learning_starts = static_cast<size_t>(cfg.sac.learning_starts);
        s.buffer_capacity = static_cast<size_t>(cfg.sac.buffer_capacity);
        s.lr_policy = cfg.sac.lr_policy;
        s.lr_q = cfg.sac.lr_q;
        s.hidden = cfg.sac.hidden;
        for (double v : obs_scale) s.obs_scale.push_back(static_cast<float>(v));
        return s;
    }

    int n_actors() const override { return policy_.n_actors(); }

    void act(const float* obs, int obs_dim, std::vector<float>& action) override {
        auto res = policy_.act(obs, obs_dim);
        action = res.action;
        beta_ = res.decision.beta;
        z_exec_ = res.z_exec;
    }

    void observe(const float* obs, int obs_dim, const std::vector<float>& action, float r,
                 const float* obs_next, bool terminated, bool truncated) override {
        policy_.share_transition(obs, obs_dim, action, r, obs_next, terminated, truncated, beta_,
                                 z_exec_);
        if (learned_) policy_.learned_selector_step(obs, obs_dim, r, obs_next, terminated, beta_);
    }

    void update(float* critic_loss, float* actor_loss) override {
        auto st = policy_.train_step(beta_);
        *critic_loss = st.critic_loss;
        *actor_loss = st.actor_loss;
    }

    void eval_action(const float* obs, int obs_dim, std::vector<float>& action) override {
        // deterministic: argmax over Q at the deterministic latents
        int beta = policy_.cfg.pin_beta >= 0 ? policy_.cfg.pin_beta : 0;
        if (policy_.cfg.pin_beta < 0) {
            if (policy_.cfg.selector == ApcConfig::Selector::learned) {
                auto p = policy_.learned.probs(obs);
                for (size_t i = 1; i < p.size(); ++i)
                    if (p[i] > p[beta]) beta = static_cast<int>(i);
            } else {
                double best = -1e300;
                for (int l = 0; l < policy_.n_actors(); ++l) {
                    Rng unused(0);
                    auto det = policy_.actors[l].ac.sample_latent(obs, unused, true);
                    const double q = policy_.actors[l].ac.q_value(obs, det.z.data());
                    if (q > best) {
                        best = q;
                        beta = l;
                    }
                }
            }
        }
        Rng unused(0);
        auto det = policy_.actors[beta].ac.sample_latent(obs, unused, true);
        const int D = policy_.action_dim();
        Mat<double> z(1, D), s(1, obs_dim);
        for (int j = 0; j < D; ++j) z(0, j) = det.z[j];
        for (int j = 0; j < obs_dim; ++j) s(0, j) = obs[j];
        const Mat<double> a = policy_.actors[beta].flow.forward(z, s).first;
        action.resize(D);
        for (int j = 0; j < D; ++j)
            action[j] = static_cast<float>(std::clamp(a(0, j), -1.0, 1.0));
    }

    int last_beta() const override { return beta_; }
    size_t buffer_size(int actor) const override { return policy_.actors[actor].ac.buffer.size(); }
    long clamp_count() const override { return policy_.clamp_count; }
    long clip_count() const override { return policy_.clip_count; }

    ApcPolicy policy_;

private:
    bool learned_ = false;
    int beta_ = 0;
    std::vector<float> z_exec_;
};

class ParrotDriver final : public Agent {
public:
    ParrotDriver(const ExperimentConfig& cfg, uint64_t seed, const std::vector<double>& obs_scale,
                 int obs_dim, int act_dim) {
        auto prior = std::make_shared<flow::FlowPrior<double>>(
            flow::load_prior<double>(cfg.method.priors.at(0)));
        if (prior->action_dim != act_dim || prior->state_dim != obs_dim)
            throw ContractError("prior dimensions do not match the environment");
        sac::SacConfig<float> pc = ApcAgent::base_sac(cfg, obs_scale, obs_dim, act_dim);
        pc.z_max = 3.0f * std::sqrt(static_cast<float>(prior->base_var));
        agent_ = baselines::ParrotAgent::make(pc, prior, seed);
    }

    int n_actors() const override { return 1; }

    void act(const float* obs, int obs_dim, std::vector<float>& action) override {
        // mirror ParrotAgent::step's action path without stepping the env
        const int D = agent_.ac.cfg.latent_dim;
        auto sample = agent_.ac.sample_latent(obs, agent_.rng, false);
        z_exec_ = sample.z;
        Mat<double> z(1, D), s(1, obs_dim);
        for (int j = 0; j < D; ++j) z(0, j) = sample.z[j];
        for (int j = 0; j < obs_dim; ++j) s(0, j) = obs[j];
        const Mat<double> a = agent_.prior.forward(z, s).first;
        action.resize(D);
        bool clipped = false;
        for (int j = 0; j < D; ++j) {
            double v = a(0, j);
            if (v < -1.0 || v > 1.0) {
                v = std::clamp(v, -1.0, 1.0);
                clipped = true;
            }
            action[j] = static_cast<float>(v);
        }
        if (clipped) ++agent_.clip_count;
    }

    void observe(const float* obs, int obs_dim, const std::vector<float>&, float r,
                 const float* obs_next, bool terminated, bool truncated) override {
        sac::Transition t;
        t.s.assign(obs, obs + obs_dim);
        t.z = z_exec_;
        t.r = r;
        t.s_next.assign(obs_next, obs_next + obs_dim);
        t.terminated = terminated;
        t.truncated = truncated;
        agent_.ac.buffer.push(std::move(t));
    }

    void update(float* critic_loss, float* actor_loss) override {
        auto res = agent_.ac.update(agent_.rng);
        *critic_loss = res.skipped ? 0 : res.critic_loss;
        *actor_loss = res.skipped ? 0 : res.actor_loss;
    }

    void eval_action(const float* obs, int obs_dim, std::vector<float>& action) override {
        Rng unused(0);
        auto det = agent_.ac.sample_latent(obs, unused, true);
        const int D = agent_.ac.cfg.latent_dim;
        Mat<double> z(1, D), s(1, obs_dim);
        for (int j = 0; j < D; ++j) z(0, j) = det.z[j];
        for (int j = 0; j < obs_dim; ++j) s(0, j) = obs[j];
        const Mat<double> a = agent_.prior.forward(z, s).first;
        action.resize(D);
        for (int j = 0; j < D; ++j)
            action[j] = static_cast<float>(std::clamp(a(0, j), -1.0, 1.0));
    }

    size_t buffer_size(int) const override { return agent_.ac.buffer.size(); }
    long clip_count() const override { return agent_.clip_count; }

private:
    baselines::ParrotAgent agent_;
    std::vector<float> z_exec_;
};

// il and qfilter: prior-free SAC plus the demonstration regularizer
class IlDriver final : public Agent {
public:
    IlDriver(const ExperimentConfig& cfg, uint64_t seed, const std::vector<double>& obs_scale,
             int obs_dim, int act_dim)
        : qfilter_(cfg.method.method == Method::qfilter),
          lambda_(static_cast<float>(cfg.method.il_weight)) {
        sac::SacConfig<float> sc = ApcAgent::base_sac(cfg, obs_scale, obs_dim, act_dim);
        sc.z_max = 1.0f;
        Rng init = Rng::stream(seed, "init:0");
        ac_ = sac::ActorCritic<float>(sc, init);
        rng_ = Rng::stream(seed, "actor:0");
        demo_rng_ = Rng::stream(seed, "demo");
        filter_rng_ = Rng::stream(seed, "qfilter");

        auto ds = data::load_dataset(cfg.method.dataset);
        if (ds.state_dim != obs_dim || ds.action_dim != act_dim)
            throw ContractError("demo dataset dimensions do not match the environment");
        if (ds.size() == 0) throw ContractError("demo dataset is empty");
        demo_s_ = Mat<float>(static_cast<int>(ds.size()), obs_dim);
        demo_a_ = Mat<float>(static_cast<int>(ds.size()), act_dim);
        for (size_t i = 0; i < ds.size(); ++i) {
            for (int j = 0; j < obs_dim; ++j)
                demo_s_(static_cast<int>(i), j) = ac_.scaled(j, ds.state(i)[j]);
            for (int j = 0; j < act_dim; ++j) demo_a_(static_cast<int>(i), j) = ds.action(i)[j];
        }
    }

    int n_actors() const override { return 1; }

    void act(const float* obs, int, std::vector<float>& action) override {
        auto sample = ac_.sample_latent(obs, rng_, false);
        action.assign(sample.z.begin(), sample.z.end());
        z_exec_ = std::move(sample.z);
    }

    void observe(const float* obs, int obs_dim, const std::vector<float>&, float r,
                 const float* obs_next, bool terminated, bool truncated) override {
        sac::Transition t;
        t.s.assign(obs, obs + obs_dim);
        t.z = z_exec_;
        t.r = r;
        t.s_next.assign(obs_next, obs_next + obs_dim);
        t.terminated = terminated;
        t.truncated = truncated;
        ac_.buffer.push(std::move(t));
    }

    void update(float* critic_loss, float* actor_loss) override {
        // fresh demo minibatch each update, same size as the RL batch
        const int b = std::min<int>(ac_.cfg.batch_size, demo_s_.rows);
        Mat<float> ds(b, demo_s_.cols), da(b, demo_a_.cols);
        for (int i = 0; i < b; ++i) {
            const size_t k = demo_rng_.uniform_int(demo_s_.rows);
            for (int j = 0; j < demo_s_.cols; ++j) ds(i, j) = demo_s_(static_cast<int>(k), j);
            for (int j = 0; j < demo_a_.cols; ++j) da(i, j) = demo_a_(static_cast<int>(k), j);
        }
        std::vector<char> mask;
        if (qfilter_) mask = qfilter_scaled(ds, da);
        auto extra = [&](const ad::Mlp<float>& pol) {
            auto imit = baselines::imitation_nll(pol, ds, da, ac_.cfg.z_max,
                                                 qfilter_ ? &mask : nullptr);
            return ad::scale(imit, lambda_);
        };
        auto res = ac_.update(rng_, extra);
        *critic_loss = res.skipped ? 0 : res.critic_loss;
        *actor_loss = res.skipped ? 0 : res.actor_loss;
    }

    void eval_action(const float* obs, int, std::vector<float>& action) override {
        Rng unused(0);
        auto det = ac_.sample_latent(obs, unused, true);
        action.assign(det.z.begin(), det.z.end());
    }

    size_t buffer_size(int) const override { return ac_.buffer.size(); }

private:
    // qfilter over already-scaled demo states: bypass ActorCritic::scaled by
    // feeding the nets directly
    std::vector<char> qfilter_scaled(const Mat<float>& ds, const Mat<float>& da) {
        const int n = ds.rows;
        std::vector<char> mask(n);
        for (int i = 0; i < n; ++i) {
            // policy sample at the scaled state
            const Mat<float> in = row_of(ds, i);
            const Mat<float> pol = ac_.policy.forward_eval(in);
            const int D = ac_.cfg.latent_dim;
            std::vector<float> a_pi(D);
            for (int j = 0; j < D; ++j) {
                const float mu = pol(0, j);
                float log_std = std::clamp(pol(0, D + j), static_cast<float>(sac::kLogStdMin),
                                           static_cast<float>(sac::kLogStdMax));
                const float u = mu + std::exp(log_std) * static_cast<float>(filter_rng_.normal());
                a_pi[j] = ac_.cfg.z_max * std::tanh(u);
            }
            const float qd = q_at(in, &da(i, 0));
            const float qp = q_at(in, a_pi.data());
            mask[i] = qd > qp;
        }
        return mask;
    }

    float q_at(const Mat<float>& scaled_obs_row, const float* z) {
        const int D = ac_.cfg.latent_dim;
        Mat<float> in(1, ac_.cfg.obs_dim + D);
        for (int j = 0; j < ac_.cfg.obs_dim; ++j) in(0, j) = scaled_obs_row(0, j);
        for (int j = 0; j < D; ++j) in(0, ac_.cfg.obs_dim + j) = z[j];
        return std::min(ac_.q1.forward_eval(in)(0, 0), ac_.q2.forward_eval(in)(0, 0));
    }

    static Mat<float> row_of(const Mat<float>& m, int i) {
        Mat<float> out(1, m.cols);
        for (int j = 0; j < m.cols; ++j) out(0, j) = m(i, j);
        return out;
    }

    bool qfilter_;
    float lambda_;
    sac::ActorCritic<float> ac_;
    Rng rng_, demo_rng_, filter_rng_;
    Mat<float> demo_s_, demo_a_;
    std::vector<float> z_exec_;
};

std::unique_ptr<Agent> make_agent(const ExperimentConfig& cfg, uint64_t seed,
                                  const std::vector<double>& obs_scale, int obs_dim, int act_dim) {
    switch (cfg.method.method) {
    case Method::scratch_sac:
    case Method::apc:
        return std::make_unique<ApcAgent>(cfg, seed, obs_scale, obs_dim, act_dim);
    case Method::parrot:
        return std::make_unique<ParrotDriver>(cfg, seed, obs_scale, obs_dim, act_dim);
    case Method::il:
    case Method::qfilter:
        return std::make_unique<IlDriver>(cfg, seed, obs_scale, obs_dim, act_dim);
    }
    throw ContractError("make_agent: unhandled method");
}

double run_eval(Agent& agent, const ExperimentConfig& cfg, uint64_t seed, long eval_index) {
    auto env = make_env(cfg.env);
    Rng rng = Rng::stream(seed, "eval:" + std::to_string(eval_index));
    double total = 0;
    std::vector<float> action(env->act_dim());
    for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
        auto obs = env->reset(rng);
        while (true) {
            agent.eval_action(obs.data(), env->obs_dim(), action);
            auto st = env->step(action.data());
            total += st.reward;
            obs = st.obs;
            if (st.terminated || st.truncated) break;
        }
    }
    return total / cfg.eval_episodes;
}

} // namespace

std::string run_prefix(const ExperimentConfig& cfg, uint64_t seed) {
    return cfg.name + "_seed" + std::to_string(seed);
}

RunSummary run_experiment(const ExperimentConfig& cfg, uint64_t seed, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    RunSummary sum;
    sum.seed = seed;

    const auto obs_scale = default_obs_scale(cfg.env);
    auto probe_env = make_env(cfg.env);
    const int obs_dim = probe_env->obs_dim();
    const int act_dim = probe_env->act_dim();

    auto agent = make_agent(cfg, seed, obs_scale, obs_dim, act_dim);
    const int K = agent->n_actors();

    // vectorized synchronous stepping with per-copy rng streams
    const int n_envs = cfg.env.num_envs;
    std::vector<std::unique_ptr<envs::Env>> envs_;
    std::vector<Rng> env_rng;
    std::vector<std::vector<float>> obs(n_envs);
    for (int i = 0; i < n_envs; ++i) {
        envs_.push_back(make_env(cfg.env));
        env_rng.push_back(Rng::stream(seed, "env:" + std::to_string(i)));
        obs[i] = envs_[i]->reset(env_rng[i]);
    }

    const std::string prefix = out_dir + "/" + run_prefix(cfg, seed);
    std::vector<std::string> train_header{"step", "episode", "episode_return", "episode_len",
                                          "success"};
    for (int k = 0; k < K; ++k) train_header.push_back("sel_frac_" + std::to_string(k));
    for (int k = 0; k < K; ++k) train_header.push_back("buffer_" + std::to_string(k));
    train_header.push_back("clamp_count");
    train_header.push_back("clip_count");
    train_header.push_back("critic_loss");
    train_header.push_back("actor_loss");
    CsvWriter train_csv(prefix + "_train.csv", train_header);
    CsvWriter eval_csv(prefix + "_eval.csv", {"step", "eval_return", "running_success"});
    std::unique_ptr<CsvWriter> beta_csv;
    if (cfg.log_decisions)
        beta_csv = std::make_unique<CsvWriter>(
            prefix + "_beta.csv", std::vector<std::string>{"step", "env", "beta"});

    // per-copy episode accumulators
    std::vector<double> ep_ret(n_envs, 0);
    std::vector<long> ep_len(n_envs, 0);
    std::vector<std::vector<long>> ep_beta(n_envs, std::vector<long>(K, 0));
    std::deque<int> success_window;
    std::vector<long> beta_totals(K, 0);

    const long update_every = cfg.sac.update_every > 0 ? cfg.sac.update_every : n_envs;
    long t = 0, episodes = 0, eval_index = 0;
    long next_eval = cfg.eval_every;
    float critic_loss = 0, actor_loss = 0;
    std::vector<float> action(act_dim);

    auto running_success = [&]() {
        if (success_window.empty()) return 0.0;
        double s = 0;
        for (int v : success_window) s += v;
        return s / success_window.size();
    };

    while (t < cfg.total_steps) {
        for (int i = 0; i < n_envs && t < cfg.total_steps; ++i) {
            agent->act(obs[i].data(), obs_dim, action);
            auto st = envs_[i]->step(action.data());
            agent->observe(obs[i].data(), obs_dim, action, static_cast<float>(st.reward),
                           st.obs.data(), st.terminated, st.truncated);
            ++t;
            ep_ret[i] += st.reward;
            ep_len[i] += 1;
            const int beta = agent->last_beta();
            ep_beta[i][beta] += 1;
            beta_totals[beta] += 1;
            if (beta_csv)
                beta_csv->row({static_cast<double>(t), static_cast<double>(i),
                               static_cast<double>(beta)});

            if (st.terminated || st.truncated) {
                ++episodes;
                success_window.push_back(st.success ? 1 : 0);
                while (static_cast<int>(success_window.size()) > cfg.success_window)
                    success_window.pop_front();
                std::vector<double> row{static_cast<double>(t), static_cast<double>(episodes),
                                        ep_ret[i], static_cast<double>(ep_len[i]),
                                        st.success ? 1.0 : 0.0};
                for (int k = 0; k < K; ++k)
                    row.push_back(static_cast<double>(ep_beta[i][k]) / ep_len[i]);
                for (int k = 0; k < K; ++k)
                    row.push_back(static_cast<double>(agent->buffer_size(k)));
                row.push_back(static_cast<double>(agent->clamp_count()));
                row.push_back(static_cast<double>(agent->clip_count()));
                row.push_back(critic_loss);
                row.push_back(actor_loss);
                train_csv.row(row);
                ep_ret[i] = 0;
                ep_len[i] = 0;
                ep_beta[i].assign(K, 0);
                obs[i] = envs_[i]->reset(env_rng[i]);
            } else {
                obs[i] = st.obs;
            }

            if (t % update_every == 0) agent->update(&critic_loss, &actor_loss);

            if (t == next_eval) {
                const double eval_ret = run_eval(*agent, cfg, seed, eval_index++);
                EvalPoint pt{t, eval_ret, running_success()};
                sum.evals.push_back(pt);
                eval_csv.row({static_cast<double>(pt.step), pt.eval_return, pt.running_success});
                next_eval += cfg.eval_every;
            }
        }
    }

    sum.episodes = episodes;
    sum.final_running_success = sum.evals.empty() ? running_success() : sum.evals.back().running_success;
    sum.final_eval_return = sum.evals.empty() ? 0.0 : sum.evals.back().eval_return;
    sum.clamp_count = agent->clamp_count();
    sum.clip_count = agent->clip_count();
    long total_sel = 0;
    for (long b : beta_totals) total_sel += b;
    for (long b : beta_totals)
        sum.selection_fraction.push_back(total_sel ? static_cast<double>(b) / total_sel : 0.0);
    sum.ok = true;
    return sum;
}

std::vector<RunSummary> run_all_seeds(const ExperimentConfig& cfg, const std::string& out_dir,
                                      int jobs) {
    std::vector<RunSummary> out(cfg.seeds.size());
    auto work = [&](size_t i) {
        try {
            out[i] = run_experiment(cfg, cfg.seeds[i], out_dir);
        } catch (const std::exception& e) {
            out[i].seed = cfg.seeds[i];
            out[i].ok = false;
            out[i].error = e.what();
        }
    };
    if (jobs <= 1) {
        for (size_t i = 0; i < cfg.seeds.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        const int n_threads = std::min<int>(jobs, static_cast<int>(cfg.seeds.size()));
        for (int th = 0; th < n_threads; ++th)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < cfg.seeds.size(); i = next.fetch_add(1))
                    work(i);
            });
        for (auto& th : pool) th.join();
    }

    // aggregation over the seeds that finished
    std::vector<uint64_t> ok_seeds;
    std::vector<std::vector<EvalPoint>> curves;
    bool any_fail = false;
    for (const auto& s : out) {
        if (s.ok) {
            ok_seeds.push_back(s.seed);
            curves.push_back(s.evals);
        } else {
            any_fail = true;
        }
    }
    if (!ok_seeds.empty())
        write_aggregate_csv(out_dir + "/" + cfg.name + "_aggregate.csv", ok_seeds, curves);
    if (any_fail) {
        CsvWriter fail(out_dir + "/" + cfg.name + "_failures.csv", {"seed", "failed"});
        for (const auto& s : out)
            if (!s.ok) fail.row({static_cast<double>(s.seed), 1.0});
    }
    return out;
}

} // namespace apc::harness
