#pragma once

// The compositional policy: a prior-free actor (identity flow, index 0) and
// n prior-based actors (frozen RealNVP flows), arbitrated per state by a
// Boltzmann distribution over per-actor Monte-Carlo value estimates. The
// reward-sharing trick maps every executed action into each actor's latent
// space through the flow inverses so that every replay buffer receives every
// transition. A learned discrete-SAC selector is kept as an ablation.
//
// Flows run in double precision (parameters are stored as f32 in the prior
// files); the SAC networks train in float.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "apc/flow.hpp"
#include "apc/sac.hpp"

namespace apc {

struct SelectorDecision {
    int beta = 0;
    std::vector<double> probs;                 // simplex over n+1 actors
    std::vector<std::vector<float>> probe_z;   // one Monte-Carlo probe per actor
    std::vector<double> q_estimates;           // Q^(l)(s, z^(l))
    bool warmup = false;
};

// Boltzmann probabilities p_l = softmax(V_l / eta), computed with
// max-subtraction so constant shifts of V leave p unchanged.
inline std::vector<double> arbitrator_probs(const std::vector<double>& values, double eta) {
    std::vector<double> p(values.size());
    double vmax = values[0];
    for (double v : values) vmax = std::max(vmax, v);
    double z = 0;
    for (size_t i = 0; i < values.size(); ++i) {
        p[i] = std::exp((values[i] - vmax) / eta);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

inline int sample_categorical(const std::vector<double>& p, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

// Discrete-SAC selector over actor indices (ablation variant).
class LearnedSelector {
public:
    struct Transition {
        std::vector<float> s;
        int beta = 0;
        float r = 0;
        std::vector<float> s_next;
        bool terminated = false;
    };

    int obs_dim = 0;
    int n_arms = 0;
    float gamma = 0.99f;
    float tau = 0.01f;
    float alpha = 0.1f;
    float lr = 3e-4f;
    int batch_size = 256;
    size_t learning_starts = 1000;
    std::vector<float> obs_scale; // same convention as the actor nets

    ad::Mlp<float> policy; // obs -> n_arms logits
    ad::Mlp<float> q, q_target;
    ad::AdamState<float> policy_opt, q_opt;
    std::vector<Transition> buffer;
    size_t buffer_cap = 1'000'000, buffer_head = 0;

    LearnedSelector() = default;
    LearnedSelector(int obs, int arms, const std::vector<int>& hidden, Rng& rng) : obs_dim(obs), n_arms(arms) {
        std::vector<int> w{obs};
        for (int h : hidden) w.push_back(h);
        w.push_back(arms);
        policy = ad::Mlp<float>::make(w, ad::Activation::tanh, ad::Activation::identity, rng);
        q = ad::Mlp<float>::make(w, ad::Activation::tanh, ad::Activation::identity, rng);
        q_target = q.clone();
    }

    float scaled(int j, float v) const { return obs_scale.empty() ? v : v * obs_scale[j]; }

    std::vector<double> probs(const float* obs) const {
        Mat<float> in(1, obs_dim);
        for (int j = 0; j < obs_dim; ++j) in(0, j) = scaled(j, obs[j]);
        const Mat<float> logits = policy.forward_eval(in);
        std::vector<double> v(n_arms);
        for (int j = 0; j < n_arms; ++j) v[j] = logits(0, j);
        return arbitrator_probs(v, 1.0);
    }

    void push(Transition t) {
        if (buffer.size() < buffer_cap) {
            buffer.push_back(std::move(t));
        } else {
            buffer[buffer_head] = std::move(t);
            buffer_head = (buffer_head + 1) % buffer_cap;
        }
    }

    double q_arm(const float* obs, int arm) const {
        Mat<float> in(1, obs_dim);
        for (int j = 0; j < obs_dim; ++j) in(0, j) = scaled(j, obs[j]);
        return q.forward_eval(in)(0, arm);
    }

    // One discrete-SAC update: the critic regresses the chosen arm toward the
    // expected soft value of the next state; the policy minimizes the
    // expected alpha log pi - Q under its own categorical distribution.
    bool update(Rng& rng);
};

// One lower-level actor: frozen flow plus its SAC learner and rng stream.
struct Actor {
    flow::AnyFlow<double> flow;
    sac::ActorCritic<float> ac;
    Rng rng;
    long dropped_transitions = 0; // inversion failures
};

struct ApcConfig {
    double eta = 1.0;
    bool reward_sharing = true;
    enum class Selector { arbitrator, learned } selector = Selector::arbitrator;
    int pin_beta = -1; // >= 0 pins the selector (PARROT equivalence)
    int density_probes = 16;
};

class ApcPolicy {
public:
    ApcConfig cfg;
    std::vector<Actor> actors; // index 0 is the prior-free actor
    LearnedSelector learned;
    Rng selector_rng;
    long clamp_count = 0; // shared latents clamped into the z box
    long clip_count = 0;  // executed actions clipped to the action box
    long skipped_updates = 0;

    // actor 0 must be prior-free; priors[i] backs actor i+1
    static ApcPolicy make(const sac::SacConfig<float>& free_cfg,
                          const sac::SacConfig<float>& prior_cfg,
                          const std::vector<std::shared_ptr<flow::FlowPrior<double>>>& priors,
                          const ApcConfig& cfg, uint64_t seed) {
        ApcPolicy p;
        p.cfg = cfg;
        p.selector_rng = Rng::stream(seed, "selector");

        Actor free;
        Rng init0 = Rng::stream(seed, "init:0");
        free.flow = flow::AnyFlow<double>(flow::IdentityFlow<double>{free_cfg.latent_dim});
        free.ac = sac::ActorCritic<float>(free_cfg, init0);
        free.rng = Rng::stream(seed, "actor:0");
        p.actors.push_back(std::move(free));

        for (size_t i = 0; i < priors.size(); ++i) {
            Actor a;
            Rng init = Rng::stream(seed, "init:" + std::to_string(i + 1));
            a.flow = flow::AnyFlow<double>(priors[i]);
            a.ac = sac::ActorCritic<float>(prior_cfg, init);
            a.rng = Rng::stream(seed, "actor:" + std::to_string(i + 1));
            p.actors.push_back(std::move(a));
        }

        if (cfg.selector == ApcConfig::Selector::learned) {
            Rng init = Rng::stream(seed, "init:selector");
            p.learned = LearnedSelector(free_cfg.obs_dim, static_cast<int>(p.actors.size()),
                                        free_cfg.hidden, init);
            p.learned.gamma = free_cfg.gamma;
            p.learned.tau = free_cfg.tau;
            p.learned.alpha = free_cfg.alpha;
            p.learned.batch_size = free_cfg.batch_size;
            p.learned.learning_starts = free_cfg.learning_starts;
            p.learned.obs_scale = free_cfg.obs_scale;
        }
        return p;
    }

    int n_actors() const { return static_cast<int>(actors.size()); }
    int action_dim() const { return actors[0].ac.cfg.latent_dim; }

    bool in_warmup() const {
        for (const auto& a : actors)
            if (a.ac.buffer.size() < std::max<size_t>(a.ac.cfg.batch_size, a.ac.cfg.learning_starts))
                return true;
        return false;
    }

    // Eq.-style selection: probe each actor's latent policy once, estimate
    // V^(l)(s) by the min-critic value at the probe, softmax at temperature
    // eta. Uniform during warmup; bypassed entirely when pinned.
    SelectorDecision select_actor(const float* obs) {
        SelectorDecision d;
        const int n = n_actors();
        if (cfg.pin_beta >= 0) {
            d.beta = cfg.pin_beta;
            d.probs.assign(n, 0.0);
            d.probs[d.beta] = 1.0;
            return d;
        }
        if (cfg.selector == ApcConfig::Selector::learned) {
            d.probs = learned.probs(obs);
            d.beta = sample_categorical(d.probs, selector_rng);
            return d;
        }
        if (in_warmup()) {
            d.warmup = true;
            d.probs.assign(n, 1.0 / n);
            d.beta = sample_categorical(d.probs, selector_rng);
            return d;
        }
        d.q_estimates.resize(n);
        d.probe_z.resize(n);
        for (int l = 0; l < n; ++l) {
            try {
                auto probe = actors[l].ac.sample_latent(obs, selector_rng, false);
                d.probe_z[l] = probe.z;
                const double qv = actors[l].ac.q_value(obs, probe.z.data());
                if (!std::isfinite(qv)) throw NumericError("non-finite Q estimate");
                d.q_estimates[l] = qv;
            } catch (const NumericError& e) {
                throw NumericError("select_actor: actor " + std::to_string(l) + ": " + e.what());
            }
        }
        d.probs = arbitrator_probs(d.q_estimates, cfg.eta);
        d.beta = sample_categorical(d.probs, selector_rng);
        return d;
    }

    struct ActResult {
        std::vector<float> action; // executed action, clipped to [-1, 1]^D
        std::vector<float> z_exec; // latent sampled from the chosen actor
        SelectorDecision decision;
        bool clipped = false;
    };

    ActResult act(const float* obs, int obs_dim) {
        ActResult res;
        res.decision = select_actor(obs);
        Actor& actor = actors[res.decision.beta];
        auto sample = actor.ac.sample_latent(obs, actor.rng, false);
        res.z_exec = sample.z;

        const int D = action_dim();
        Mat<double> z(1, D), s(1, obs_dim);
        for (int j = 0; j < D; ++j) z(0, j) = sample.z[j];
        for (int j = 0; j < obs_dim; ++j) s(0, j) = obs[j];
        const Mat<double> a = actor.flow.forward(z, s).first;
        res.action.resize(D);
        for (int j = 0; j < D; ++j) {
            double v = a(0, j);
            if (v < -1.0 || v > 1.0) {
                v = std::clamp(v, -1.0, 1.0);
                res.clipped = true;
            }
            res.action[j] = static_cast<float>(v);
        }
        if (res.clipped) ++clip_count;
        return res;
    }

    // Reward sharing: the selected actor stores the executed latent; every
    // other actor receives the executed action mapped into its own latent
    // space, clamped into its z box (clamps counted, inversion failures drop
    // the transition for that actor only).
    void share_transition(const float* obs, int obs_dim, const std::vector<float>& action,
                          float reward, const float* obs_next, bool terminated, bool truncated,
                          int beta, const std::vector<float>& z_exec) {
        const int D = action_dim();
        auto make_transition = [&](std::vector<float> z) {
            sac::Transition t;
            t.s.assign(obs, obs + obs_dim);
            t.z = std::move(z);
            t.r = reward;
            t.s_next.assign(obs_next, obs_next + obs_dim);
            t.terminated = terminated;
            t.truncated = truncated;
            return t;
        };

        if (!cfg.reward_sharing) {
            actors[beta].ac.buffer.push(make_transition(z_exec));
            return;
        }
        Mat<double> a(1, D), s(1, obs_dim);
        for (int j = 0; j < D; ++j) a(0, j) = action[j];
        for (int j = 0; j < obs_dim; ++j) s(0, j) = obs[j];
        for (int i = 0; i < n_actors(); ++i) {
            if (i == beta) {
                actors[i].ac.buffer.push(make_transition(z_exec));
                continue;
            }
            std::vector<float> z(D);
            try {
                const Mat<double> zi = actors[i].flow.inverse(a, s).first;
                bool clamped = false;
                const double zmax = actors[i].ac.cfg.z_max;
                for (int j = 0; j < D; ++j) {
                    double v = zi(0, j);
                    if (v < -zmax || v > zmax) {
                        v = std::clamp(v, -zmax, zmax);
                        clamped = true;
                    }
                    z[j] = static_cast<float>(v);
                }
                if (clamped) ++clamp_count;
            } catch (const NumericError&) {
                ++actors[i].dropped_transitions;
                continue;
            }
            actors[i].ac.buffer.push(make_transition(std::move(z)));
        }
    }

    struct TrainStats {
        float critic_loss = 0, actor_loss = 0;
        int updated = 0;
    };

    // Sharing on: every actor updates from its own buffer. Sharing off: only
    // the selected actor updates.
    TrainStats train_step(int beta) {
        TrainStats st;
        for (int i = 0; i < n_actors(); ++i) {
            if (!cfg.reward_sharing && i != beta) continue;
            auto res = actors[i].ac.update(actors[i].rng);
            if (res.skipped) {
                ++skipped_updates;
            } else {
                st.critic_loss += res.critic_loss;
                st.actor_loss += res.actor_loss;
                ++st.updated;
            }
        }
        if (st.updated) {
            st.critic_loss /= st.updated;
            st.actor_loss /= st.updated;
        }
        return st;
    }

    // Ablation: store the selector-level transition and run one discrete-SAC
    // update on the learned selector.
    void learned_selector_step(const float* obs, int obs_dim, float reward, const float* obs_next,
                               bool terminated, int beta) {
        if (cfg.selector != ApcConfig::Selector::learned)
            throw ContractError("learned_selector_step: selector is not learned");
        LearnedSelector::Transition t;
        t.s.assign(obs, obs + obs_dim);
        t.beta = beta;
        t.r = reward;
        t.s_next.assign(obs_next, obs_next + obs_dim);
        t.terminated = terminated;
        learned.push(std::move(t));
        learned.update(selector_rng);
    }

    // Mixture density of Eq.-3 form: sum over actors of selector probability
    // times the change-of-variables density of the executed action. Selector
    // probabilities are probe-averaged over cfg.density_probes draws.
    double policy_density(const float* obs, int obs_dim, const float* action) {
        const int n = n_actors();
        const int D = action_dim();
        std::vector<double> pbar(n, 0.0);
        if (cfg.pin_beta >= 0) {
            pbar.assign(n, 0.0);
            pbar[cfg.pin_beta] = 1.0;
        } else if (in_warmup() || cfg.selector == ApcConfig::Selector::learned) {
            if (cfg.selector == ApcConfig::Selector::learned) {
                pbar = learned.probs(obs);
            } else {
                pbar.assign(n, 1.0 / n);
            }
        } else {
            for (int probe = 0; probe < cfg.density_probes; ++probe) {
                std::vector<double> qs(n);
                for (int l = 0; l < n; ++l) {
                    auto pz = actors[l].ac.sample_latent(obs, selector_rng, false);
                    qs[l] = actors[l].ac.q_value(obs, pz.z.data());
                }
                const auto p = arbitrator_probs(qs, cfg.eta);
                for (int l = 0; l < n; ++l) pbar[l] += p[l] / cfg.density_probes;
            }
        }

        Mat<double> a(1, D), s(1, obs_dim);
        for (int j = 0; j < D; ++j) a(0, j) = action[j];
        for (int j = 0; j < obs_dim; ++j) s(0, j) = obs[j];
        double density = 0;
        for (int l = 0; l < n; ++l) {
            const auto [z, logdet] = actors[l].flow.inverse(a, s);
            std::vector<float> zf(D);
            for (int j = 0; j < D; ++j) zf[j] = static_cast<float>(z(0, j));
            const double lp = actors[l].ac.log_prob_latent(obs, zf.data());
            if (!std::isfinite(lp)) continue; // latent outside the actor's box
            density += pbar[l] * std::exp(lp + logdet(0, 0));
        }
        return density;
    }
};

inline bool LearnedSelector::update(Rng& rng) {
    if (buffer.size() < std::max<size_t>(batch_size, learning_starts)) return false;
    const int n = batch_size;
    Mat<float> s(n, obs_dim), s2(n, obs_dim), onehot(n, n_arms);
    Mat<float> y(n, 1);
    std::vector<size_t> idx(n);
    for (auto& i : idx) i = rng.uniform_int(buffer.size());

    for (int i = 0; i < n; ++i) {
        const auto& t = buffer[idx[i]];
        for (int j = 0; j < obs_dim; ++j) {
            s(i, j) = scaled(j, t.s[j]);
            s2(i, j) = scaled(j, t.s_next[j]);
        }
        onehot(i, t.beta) = 1.0f;
    }
    // expected soft value of the next state under the current policy
    const Mat<float> logits2 = policy.forward_eval(s2);
    const Mat<float> q2 = q_target.forward_eval(s2);
    for (int i = 0; i < n; ++i) {
        float vmax = logits2(i, 0);
        for (int j = 0; j < n_arms; ++j) vmax = std::max(vmax, logits2(i, j));
        float zsum = 0;
        for (int j = 0; j < n_arms; ++j) zsum += std::exp(logits2(i, j) - vmax);
        float v = 0;
        for (int j = 0; j < n_arms; ++j) {
            const float pj = std::exp(logits2(i, j) - vmax) / zsum;
            const float logpj = logits2(i, j) - vmax - std::log(zsum);
            v += pj * (q2(i, j) - alpha * logpj);
        }
        const auto& t = buffer[idx[i]];
        y(i, 0) = t.r + gamma * (t.terminated ? 0.0f : 1.0f) * v;
    }

    auto s_c = ad::Var<float>::constant(s);
    auto mask = ad::Var<float>::constant(onehot);
    auto q_all = q.forward(s_c);
    auto q_sel = ad::sum_rows(ad::mul(q_all, mask));
    auto critic_loss = ad::mean_all(ad::square(ad::sub(q_sel, ad::Var<float>::constant(y))));
    ad::backward(critic_loss);
    ad::adam_step(q.params(), q_opt, lr);

    // policy step: minimize E_pi[alpha log pi - Q], critic frozen
    const Mat<float> q_now = q.forward_eval(s);
    auto logits = policy.forward(s_c);
    Mat<float> rowmax(n, 1);
    for (int i = 0; i < n; ++i) {
        float m = logits.value()(i, 0);
        for (int j = 0; j < n_arms; ++j) m = std::max(m, logits.value()(i, j));
        rowmax(i, 0) = m;
    }
    auto shifted = ad::add_colvec(logits, ad::neg(ad::Var<float>::constant(rowmax)));
    auto e = ad::exp_(shifted);
    auto zsum = ad::sum_rows(e);
    auto p = ad::mul_colvec(e, ad::recip(zsum));
    auto logp = ad::add_colvec(shifted, ad::neg(ad::log_(zsum)));
    auto inner = ad::sub(ad::scale(logp, alpha), ad::Var<float>::constant(q_now));
    auto actor_loss = ad::mean_all(ad::sum_rows(ad::mul(p, inner)));
    ad::backward(actor_loss);
    ad::adam_step(policy.params(), policy_opt, lr);

    ad::polyak_update(q_target, q, tau);
    return true;
}

} // namespace apc
