#pragma once

// Comparison methods sharing the sac/flow internals: from-scratch SAC,
// PARROT mode (single frozen prior, no selector, no prior-free actor),
// imitation-regularized SAC, and the Q-filtered variant.

#include "apc/data.hpp"
#include "apc/envs.hpp"
#include "apc/flow.hpp"
#include "apc/sac.hpp"

namespace apc::baselines {

enum class Method { scratch_sac, parrot, il, qfilter, apc };

inline const char* method_name(Method m) {
    switch (m) {
    case Method::scratch_sac: return "sac";
    case Method::parrot: return "parrot";
    case Method::il: return "il";
    case Method::qfilter: return "qfilter";
    case Method::apc: return "apc";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "sac") return Method::scratch_sac;
    if (s == "parrot") return Method::parrot;
    if (s == "il") return Method::il;
    if (s == "qfilter") return Method::qfilter;
    if (s == "apc") return Method::apc;
    throw ConfigError("unknown method: " + s);
}

// ---- imitation term ----

// Mean negative log-likelihood of demonstration pairs under the actor's
// squashed-Gaussian density in env action space, with an optional pair mask
// (the Q filter). Masked form: sum(mask_i * term_i) / batch, so an all-true
// mask reduces to the plain mean and an all-false mask contributes zero.
template <class R>
ad::Var<R> imitation_nll(const ad::Mlp<R>& policy, const Mat<R>& demo_s, const Mat<R>& demo_a,
                         R z_max, const std::vector<char>* mask = nullptr) {
    const int n = demo_s.rows;
    const int D = demo_a.cols;
    if (n == 0) throw ContractError("imitation_nll: empty demo batch");

    // pre-squash coordinates of the demo actions; boundary actions are pulled
    // into the open interval by 1e-6 before the inverse tanh
    Mat<R> u(n, D);
    Mat<R> corr(n, 1); // constant squash correction per pair
    for (int i = 0; i < n; ++i) {
        R c = 0;
        for (int j = 0; j < D; ++j) {
            double ratio = demo_a(i, j) / z_max;
            const double lim = 1.0 - 1e-6;
            ratio = std::clamp(ratio, -lim, lim);
            const double ui = std::atanh(ratio);
            u(i, j) = static_cast<R>(ui);
            c += static_cast<R>(std::log(static_cast<double>(z_max) * (1.0 - std::tanh(ui) * std::tanh(ui))));
        }
        corr(i, 0) = c;
    }

    auto pol = policy.forward(ad::Var<R>::constant(demo_s));
    auto mu = ad::slice_cols(pol, 0, D);
    auto log_std = ad::clamp(ad::slice_cols(pol, D, 2 * D), static_cast<R>(sac::kLogStdMin),
                             static_cast<R>(sac::kLogStdMax));
    auto diff = ad::mul(ad::sub(ad::Var<R>::constant(u), mu), ad::exp_(ad::neg(log_std)));
    auto per_dim = ad::add_scalar(ad::add(ad::scale(ad::square(diff), R(0.5)), log_std),
                                  static_cast<R>(0.5 * sac::kLogTwoPi));
    // -log pi(a|s) = Gaussian NLL at u plus the (constant) squash correction
    auto per_pair = ad::add(ad::sum_rows(per_dim), ad::Var<R>::constant(corr));

    Mat<R> m(n, 1);
    for (int i = 0; i < n; ++i) m(i, 0) = mask ? static_cast<R>((*mask)[i]) : R(1);
    auto masked = ad::mul(per_pair, ad::Var<R>::constant(m));
    return ad::scale(ad::sum_all(masked), R(1) / static_cast<R>(n));
}

// SAC actor loss on the RL batch plus lambda_il times the (optionally
// masked) imitation term on the demo batch.
template <class R>
ad::Var<R> il_actor_loss(const ad::Mlp<R>& policy, const ad::Mlp<R>& q1, const ad::Mlp<R>& q2,
                         const Mat<R>& rl_s, const Mat<R>& rl_xi, R alpha, R z_max,
                         const Mat<R>& demo_s, const Mat<R>& demo_a, R lambda_il,
                         const std::vector<char>* mask = nullptr) {
    auto base = sac::actor_loss_graph(policy, q1, q2, rl_s, rl_xi, alpha, z_max);
    if (lambda_il == R(0)) return base;
    auto imit = imitation_nll(policy, demo_s, demo_a, z_max, mask);
    return ad::add(base, ad::scale(imit, lambda_il));
}

// ---- Q filter ----

struct QFilterResult {
    std::vector<char> mask;          // keep pair i when Q(s, a_demo) > Q(s, a_pi)
    std::vector<std::vector<float>> sampled; // the freshly sampled policy actions
};

template <class R>
QFilterResult qfilter_mask(const sac::ActorCritic<R>& actor, const Mat<R>& demo_s,
                           const Mat<R>& demo_a, Rng& rng) {
    const int n = demo_s.rows;
    const int D = demo_a.cols;
    QFilterResult out;
    out.mask.resize(n);
    out.sampled.resize(n);
    std::vector<float> obs(demo_s.cols);
    std::vector<R> a_demo(D);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < demo_s.cols; ++j) obs[j] = static_cast<float>(demo_s(i, j));
        auto pi = actor.sample_latent(obs.data(), rng, false);
        out.sampled[i].assign(pi.z.begin(), pi.z.end());
        std::vector<R> a_pi(pi.z.begin(), pi.z.end());
        for (int j = 0; j < D; ++j) a_demo[j] = demo_a(i, j);
        // min of twin critics on both sides, strict inequality
        out.mask[i] = actor.q_value(obs.data(), a_demo.data()) > actor.q_value(obs.data(), a_pi.data());
    }
    return out;
}

// ---- PARROT mode ----

// Exactly the compositional policy with a single prior-based actor, no
// selector and no prior-free actor: sample a latent, push it through the
// frozen prior, store (s, z, r, s') in the single buffer.
struct ParrotAgent {
    flow::AnyFlow<double> prior;
    sac::ActorCritic<float> ac;
    Rng rng;
    long clip_count = 0;

    // Stream labels mirror the compositional policy's actor 1 so that a
    // pinned selector reproduces PARROT trajectories bit for bit.
    static ParrotAgent make(const sac::SacConfig<float>& cfg,
                            std::shared_ptr<flow::FlowPrior<double>> prior, uint64_t seed) {
        ParrotAgent p;
        Rng init = Rng::stream(seed, "init:1");
        p.ac = sac::ActorCritic<float>(cfg, init);
        p.prior = prior ? flow::AnyFlow<double>(std::move(prior))
                        : flow::AnyFlow<double>(flow::IdentityFlow<double>{cfg.latent_dim});
        p.rng = Rng::stream(seed, "actor:1");
        return p;
    }

    struct StepResult {
        std::vector<float> action;
        std::vector<float> z_exec;
        envs::EnvStep env;
    };

    StepResult step(envs::Env& env, const std::vector<float>& obs) {
        const int D = ac.cfg.latent_dim;
        auto sample = ac.sample_latent(obs.data(), rng, false);
        Mat<double> z(1, D), s(1, static_cast<int>(obs.size()));
        for (int j = 0; j < D; ++j) z(0, j) = sample.z[j];
        for (size_t j = 0; j < obs.size(); ++j) s(0, static_cast<int>(j)) = obs[j];
        const Mat<double> a = prior.forward(z, s).first;

        StepResult res;
        res.z_exec = sample.z;
        res.action.resize(D);
        bool clipped = false;
        for (int j = 0; j < D; ++j) {
            double v = a(0, j);
            if (v < -1.0 || v > 1.0) {
                v = std::clamp(v, -1.0, 1.0);
                clipped = true;
            }
            res.action[j] = static_cast<float>(v);
        }
        if (clipped) ++clip_count;

        res.env = env.step(res.action.data());
        sac::Transition t;
        t.s = obs;
        t.z = sample.z;
        t.r = static_cast<float>(res.env.reward);
        t.s_next = res.env.obs;
        t.terminated = res.env.terminated;
        t.truncated = res.env.truncated;
        ac.buffer.push(std::move(t));
        return res;
    }
};

} // namespace apc::baselines
