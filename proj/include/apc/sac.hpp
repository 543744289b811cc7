#pragma once

// One lower-level actor: Soft Actor-Critic over a latent action box
// (-z_max, z_max)^D with a tanh-squashed Gaussian policy, twin Q critics
// with Polyak-averaged targets, a fixed entropy coefficient and a private
// FIFO replay buffer. Updates run one critic step and one policy step per
// call; the policy step differentiates through frozen critics.

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "apc/adam.hpp"
#include "apc/autodiff.hpp"
#include "apc/mlp.hpp"
#include "apc/rng.hpp"
#include "apc/serialize.hpp"

namespace apc::sac {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

struct Transition {
    std::vector<float> s;
    std::vector<float> z;
    float r = 0;
    std::vector<float> s_next;
    bool terminated = false;
    bool truncated = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity = 1'000'000) : capacity_(capacity) {}

    size_t size() const { return data_.size(); }
    size_t capacity() const { return capacity_; }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t); // FIFO eviction
            head_ = (head_ + 1) % capacity_;
        }
    }

    const Transition& at(size_t i) const { return data_[i]; }

    // Uniform with replacement.
    std::vector<size_t> sample_indices(size_t n, Rng& rng) const {
        std::vector<size_t> idx(n);
        for (auto& i : idx) i = rng.uniform_int(data_.size());
        return idx;
    }

private:
    size_t capacity_;
    size_t head_ = 0;
    std::vector<Transition> data_;
};

template <class R>
struct SacConfig {
    int obs_dim = 0;
    int latent_dim = 0;
    R z_max = R(1);
    R gamma = R(0.99);
    R tau = R(0.01);
    R alpha = R(0.1); // fixed, no autotuning
    R lr_policy = R(3e-4);
    R lr_q = R(1e-3);
    int batch_size = 256;
    size_t learning_starts = 1000;
    size_t buffer_capacity = 1'000'000;
    std::vector<int> hidden = {512, 256};
    ad::Activation activation = ad::Activation::tanh;
    // fixed per-dimension input multipliers applied before the nets; empty
    // means raw observations
    std::vector<R> obs_scale;
};

template <class R>
struct SquashedSample {
    std::vector<R> z;      // in (-z_max, z_max)^D
    R log_prob = R(0);     // unset (0) in deterministic mode
    bool deterministic = false;
};

// log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)); stable for large |u|.
template <class R>
inline R log1m_tanh_sq(R u) {
    const R two = R(2);
    const R sp = std::max(-two * u, R(0)) + std::log1p(std::exp(-std::abs(two * u)));
    return two * (static_cast<R>(0.6931471805599453) - u - sp);
}

struct UpdateResult {
    bool skipped = true;
    float critic_loss = 0;
    float actor_loss = 0;
};

// SAC policy objective mean(alpha log pi(z|s) - min Q(s, z)) with z
// reparameterized through fixed noise xi. Shared by update() and the
// finite-difference gradient checks.
template <class R>
ad::Var<R> actor_loss_graph(const ad::Mlp<R>& policy, const ad::Mlp<R>& q1, const ad::Mlp<R>& q2,
                            const Mat<R>& s, const Mat<R>& xi, R alpha, R z_max) {
    const int D = xi.cols;
    auto s_c = ad::Var<R>::constant(s);
    auto pol = policy.forward(s_c);
    auto mu = ad::slice_cols(pol, 0, D);
    auto log_std = ad::clamp(ad::slice_cols(pol, D, 2 * D), static_cast<R>(kLogStdMin),
                             static_cast<R>(kLogStdMax));
    auto sigma = ad::exp_(log_std);
    auto u = ad::add(mu, ad::mul(sigma, ad::Var<R>::constant(xi)));
    auto z = ad::scale(ad::tanh_(u), z_max);

    // log pi(z|s): Gaussian density at u minus the tanh-squash correction
    auto diff = ad::mul(ad::sub(u, mu), ad::exp_(ad::neg(log_std)));
    auto gauss = ad::add_scalar(ad::neg(ad::add(ad::scale(ad::square(diff), R(0.5)), log_std)),
                                static_cast<R>(-0.5 * kLogTwoPi));
    // log(zmax (1 - tanh(u)^2)) via the softplus identity
    auto corr = ad::add_scalar(
        ad::scale(ad::add(u, ad::softplus(ad::scale(u, R(-2)))), R(-2)),
        static_cast<R>(2 * 0.6931471805599453 + std::log(static_cast<double>(z_max))));
    auto logp = ad::sum_rows(ad::sub(gauss, corr));

    auto qin = ad::concat_cols(s_c, z);
    auto qmin = ad::minimum(q1.forward(qin), q2.forward(qin));
    return ad::mean_all(ad::sub(ad::scale(logp, alpha), qmin));
}

// Soft TD target for a single transition; the arithmetic behind
// critic_target, exposed for direct testing.
template <class R>
inline R soft_target(R r, bool terminated, R gamma, R alpha, R q1t, R q2t, R logp_next) {
    const R boot = terminated ? R(0) : R(1);
    return r + gamma * boot * (std::min(q1t, q2t) - alpha * logp_next);
}

template <class R>
class ActorCritic {
public:
    SacConfig<R> cfg;
    ad::Mlp<R> policy;          // obs -> (mu, log_std) per latent dim
    ad::Mlp<R> q1, q2;          // (obs, z) -> scalar
    ad::Mlp<R> q1_target, q2_target;
    ad::AdamState<R> policy_opt;
    ad::AdamState<R> q_opt;     // joint state over q1 and q2 parameters
    ReplayBuffer buffer;

    ActorCritic() : buffer(0) {}

    ActorCritic(const SacConfig<R>& c, Rng& rng) : cfg(c), buffer(c.buffer_capacity) {
        std::vector<int> pw{c.obs_dim};
        for (int h : c.hidden) pw.push_back(h);
        pw.push_back(2 * c.latent_dim);
        policy = ad::Mlp<R>::make(pw, c.activation, ad::Activation::identity, rng);

        std::vector<int> qw{c.obs_dim + c.latent_dim};
        for (int h : c.hidden) qw.push_back(h);
        qw.push_back(1);
        q1 = ad::Mlp<R>::make(qw, c.activation, ad::Activation::identity, rng);
        q2 = ad::Mlp<R>::make(qw, c.activation, ad::Activation::identity, rng);
        q1_target = q1.clone();
        q2_target = q2.clone();
    }

    R scaled(int j, float v) const {
        return cfg.obs_scale.empty() ? static_cast<R>(v) : static_cast<R>(v) * cfg.obs_scale[j];
    }

    // ---- acting ----

    // Stochastic: z = z_max tanh(mu + sigma xi), xi ~ N(0, I), with the exact
    // squash-corrected log-prob. Deterministic: z = z_max tanh(mu).
    SquashedSample<R> sample_latent(const float* obs, Rng& rng, bool deterministic = false) const {
        Mat<R> in(1, cfg.obs_dim);
        for (int j = 0; j < cfg.obs_dim; ++j) in(0, j) = scaled(j, obs[j]);
        const Mat<R> out = policy.forward_eval(in);
        SquashedSample<R> s;
        s.deterministic = deterministic;
        s.z.resize(cfg.latent_dim);
        R logp = 0;
        for (int j = 0; j < cfg.latent_dim; ++j) {
            const R mu = out(0, j);
            R log_std = out(0, cfg.latent_dim + j);
            log_std = std::clamp(log_std, static_cast<R>(kLogStdMin), static_cast<R>(kLogStdMax));
            const R sigma = std::exp(log_std);
            R u = mu;
            if (!deterministic) {
                const R xi = static_cast<R>(rng.normal());
                u = mu + sigma * xi;
                logp += -R(0.5) * ((u - mu) / sigma) * ((u - mu) / sigma) - log_std -
                        R(0.5) * static_cast<R>(kLogTwoPi);
                logp -= std::log(cfg.z_max) + log1m_tanh_sq(u);
            }
            s.z[j] = cfg.z_max * std::tanh(u);
        }
        if (!deterministic) s.log_prob = logp;
        return s;
    }

    // Exact squashed-Gaussian log density of a latent point z already inside
    // the box; -inf outside. Used by the mixture density and the IL term.
    R log_prob_latent(const float* obs, const R* z) const {
        Mat<R> in(1, cfg.obs_dim);
        for (int j = 0; j < cfg.obs_dim; ++j) in(0, j) = scaled(j, obs[j]);
        const Mat<R> out = policy.forward_eval(in);
        R logp = 0;
        for (int j = 0; j < cfg.latent_dim; ++j) {
            const R ratio = z[j] / cfg.z_max;
            if (!(std::abs(ratio) < R(1))) return -std::numeric_limits<R>::infinity();
            const R u = static_cast<R>(std::atanh(static_cast<double>(ratio)));
            const R mu = out(0, j);
            R log_std = out(0, cfg.latent_dim + j);
            log_std = std::clamp(log_std, static_cast<R>(kLogStdMin), static_cast<R>(kLogStdMax));
            const R sigma = std::exp(log_std);
            logp += -R(0.5) * ((u - mu) / sigma) * ((u - mu) / sigma) - log_std -
                    R(0.5) * static_cast<R>(kLogTwoPi);
            logp -= std::log(cfg.z_max) + log1m_tanh_sq(u);
        }
        return logp;
    }

    // min of the two online critics at (s, z)
    R q_value(const float* obs, const R* z) const {
        Mat<R> in(1, cfg.obs_dim + cfg.latent_dim);
        for (int j = 0; j < cfg.obs_dim; ++j) in(0, j) = scaled(j, obs[j]);
        for (int j = 0; j < cfg.latent_dim; ++j) in(0, cfg.obs_dim + j) = z[j];
        const R a = q1.forward_eval(in)(0, 0);
        const R b = q2.forward_eval(in)(0, 0);
        return std::min(a, b);
    }

    // ---- learning ----

    // Soft targets y for a batch: y = r + gamma (1 - terminated)
    //   (min Q'(s', z') - alpha log pi(z'|s')), z' freshly sampled.
    // Truncated-but-not-terminated transitions still bootstrap.
    Mat<R> critic_target(const std::vector<size_t>& idx, Rng& rng) const {
        const int n = static_cast<int>(idx.size());
        Mat<R> s2(n, cfg.obs_dim);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < cfg.obs_dim; ++j) s2(i, j) = scaled(j, buffer.at(idx[i]).s_next[j]);

        const Mat<R> pol = policy.forward_eval(s2);
        Mat<R> in(n, cfg.obs_dim + cfg.latent_dim);
        Mat<R> logp(n, 1);
        for (int i = 0; i < n; ++i) {
            R lp = 0;
            for (int j = 0; j < cfg.obs_dim; ++j) in(i, j) = s2(i, j);
            for (int j = 0; j < cfg.latent_dim; ++j) {
                const R mu = pol(i, j);
                R log_std = std::clamp(pol(i, cfg.latent_dim + j), static_cast<R>(kLogStdMin),
                                       static_cast<R>(kLogStdMax));
                const R sigma = std::exp(log_std);
                const R xi = static_cast<R>(rng.normal());
                const R u = mu + sigma * xi;
                lp += -R(0.5) * xi * xi - log_std - R(0.5) * static_cast<R>(kLogTwoPi);
                lp -= std::log(cfg.z_max) + log1m_tanh_sq(u);
                in(i, cfg.obs_dim + j) = cfg.z_max * std::tanh(u);
            }
            logp(i, 0) = lp;
        }
        const Mat<R> q1t = q1_target.forward_eval(in);
        const Mat<R> q2t = q2_target.forward_eval(in);
        Mat<R> y(n, 1);
        for (int i = 0; i < n; ++i) {
            const auto& t = buffer.at(idx[i]);
            y(i, 0) = soft_target(static_cast<R>(t.r), t.terminated, cfg.gamma, cfg.alpha,
                                  q1t(i, 0), q2t(i, 0), logp(i, 0));
        }
        return y;
    }

    // Optional extra actor-loss term built on the recorded policy outputs
    // (imitation regularizers plug in here).
    using ActorLossExtra = std::function<ad::Var<R>(const ad::Mlp<R>& policy)>;

    UpdateResult update(Rng& rng, const ActorLossExtra& extra = nullptr) {
        UpdateResult res;
        if (buffer.size() < std::max<size_t>(cfg.batch_size, cfg.learning_starts)) return res;
        const auto idx = buffer.sample_indices(cfg.batch_size, rng);
        const int n = cfg.batch_size;

        // gather batch (observations pre-scaled)
        Mat<R> s(n, cfg.obs_dim);
        Mat<R> sz(n, cfg.obs_dim + cfg.latent_dim);
        for (int i = 0; i < n; ++i) {
            const auto& t = buffer.at(idx[i]);
            for (int j = 0; j < cfg.obs_dim; ++j) {
                s(i, j) = scaled(j, t.s[j]);
                sz(i, j) = s(i, j);
            }
            for (int j = 0; j < cfg.latent_dim; ++j) sz(i, cfg.obs_dim + j) = static_cast<R>(t.z[j]);
        }

        // critic step
        const Mat<R> y = critic_target(idx, rng);
        auto y_c = ad::Var<R>::constant(y);
        auto sz_c = ad::Var<R>::constant(sz);
        auto l1 = ad::mean_all(ad::square(ad::sub(q1.forward(sz_c), y_c)));
        auto l2 = ad::mean_all(ad::square(ad::sub(q2.forward(sz_c), y_c)));
        auto critic_loss = ad::add(l1, l2);
        res.critic_loss = static_cast<float>(critic_loss.value()(0, 0));
        ad::backward(critic_loss);
        auto q_params = q1.params();
        for (auto p : q2.params()) q_params.push_back(p);
        ad::adam_step(q_params, q_opt, cfg.lr_q);

        // actor step: reparameterized z through the current policy
        Mat<R> xi(n, cfg.latent_dim);
        for (auto& v : xi.d) v = static_cast<R>(rng.normal());
        auto actor_loss = actor_loss_graph(policy, q1, q2, s, xi, cfg.alpha, cfg.z_max);
        if (extra) actor_loss = ad::add(actor_loss, extra(policy));
        res.actor_loss = static_cast<float>(actor_loss.value()(0, 0));

        // critics are frozen during the policy step: gradients still flow
        // through them to z but are not written into psi
        ad::set_requires_grad(q_params, false);
        ad::backward(actor_loss);
        ad::set_requires_grad(q_params, true);
        ad::adam_step(policy.params(), policy_opt, cfg.lr_policy);

        polyak_update(q1_target, q1, cfg.tau);
        polyak_update(q2_target, q2, cfg.tau);
        res.skipped = false;
        return res;
    }

    long policy_step_count() const { return policy_opt.step_count; }

    // ---- checkpointing ("APCC", buffer excluded) ----

    void save(io::BinWriter& w) const {
        w.magic("APCC");
        w.u16(1);
        w.u32(static_cast<uint32_t>(cfg.obs_dim));
        w.u32(static_cast<uint32_t>(cfg.latent_dim));
        w.f32(static_cast<float>(cfg.z_max));
        w.f32(static_cast<float>(cfg.alpha));
        io::write_mlp(w, policy);
        io::write_mlp(w, q1);
        io::write_mlp(w, q2);
        io::write_mlp(w, q1_target);
        io::write_mlp(w, q2_target);
        auto write_opt = [&w](const ad::AdamState<R>& st) {
            w.u64(static_cast<uint64_t>(st.step_count));
            w.u32(static_cast<uint32_t>(st.m.size()));
            for (const auto& m : st.m) {
                w.u32(static_cast<uint32_t>(m.rows));
                w.u32(static_cast<uint32_t>(m.cols));
                for (const R& v : m.d) w.f32(static_cast<float>(v));
            }
            for (const auto& v : st.v)
                for (const R& x : v.d) w.f32(static_cast<float>(x));
        };
        write_opt(policy_opt);
        write_opt(q_opt);
    }

    void load(io::BinReader& r) {
        r.expect_magic("APCC", "checkpoint");
        const uint16_t version = r.u16();
        if (version != 1) throw VersionError("unsupported checkpoint version");
        cfg.obs_dim = static_cast<int>(r.u32());
        cfg.latent_dim = static_cast<int>(r.u32());
        cfg.z_max = static_cast<R>(r.f32());
        cfg.alpha = static_cast<R>(r.f32());
        policy = io::read_mlp<R>(r);
        q1 = io::read_mlp<R>(r);
        q2 = io::read_mlp<R>(r);
        q1_target = io::read_mlp<R>(r);
        q2_target = io::read_mlp<R>(r);
        auto read_opt = [&r](ad::AdamState<R>& st) {
            st.step_count = static_cast<long>(r.u64());
            const uint32_t n = r.u32();
            st.m.clear();
            st.v.clear();
            for (uint32_t i = 0; i < n; ++i) {
                const int rows = static_cast<int>(r.u32());
                const int cols = static_cast<int>(r.u32());
                Mat<R> m(rows, cols);
                for (auto& v : m.d) v = static_cast<R>(r.f32());
                st.m.push_back(std::move(m));
            }
            for (uint32_t i = 0; i < n; ++i) {
                Mat<R> v(st.m[i].rows, st.m[i].cols);
                for (auto& x : v.d) x = static_cast<R>(r.f32());
                st.v.push_back(std::move(v));
            }
        };
        read_opt(policy_opt);
        read_opt(q_opt);
    }
};

} // namespace apc::sac
