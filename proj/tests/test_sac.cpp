#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "apc/sac.hpp"

using namespace apc;
using namespace apc::sac;

namespace {

// policy net whose outputs are constants: mu = mu_bias, log_std = ls_bias
template <class R>
ad::Mlp<R> constant_policy(int obs_dim, int D, R mu_bias, R ls_bias) {
    ad::Mlp<R> net;
    ad::Linear<R> lay;
    lay.in = obs_dim;
    lay.out = 2 * D;
    lay.W = ad::Var<R>::leaf(Mat<R>::zeros(obs_dim, 2 * D), true);
    Mat<R> b(1, 2 * D);
    for (int j = 0; j < D; ++j) {
        b(0, j) = mu_bias;
        b(0, D + j) = ls_bias;
    }
    lay.b = ad::Var<R>::leaf(b, true);
    lay.act = ad::Activation::identity;
    net.layers.push_back(lay);
    return net;
}

// critic returning a constant for any input
template <class R>
ad::Mlp<R> constant_critic(int in_dim, R value) {
    ad::Mlp<R> net;
    ad::Linear<R> lay;
    lay.in = in_dim;
    lay.out = 1;
    lay.W = ad::Var<R>::leaf(Mat<R>::zeros(in_dim, 1), true);
    Mat<R> b(1, 1);
    b(0, 0) = value;
    lay.b = ad::Var<R>::leaf(b, true);
    lay.act = ad::Activation::identity;
    net.layers.push_back(lay);
    return net;
}

template <class R>
SacConfig<R> small_cfg(int obs, int D) {
    SacConfig<R> c;
    c.obs_dim = obs;
    c.latent_dim = D;
    c.z_max = R(1);
    c.hidden = {16, 16};
    c.batch_size = 32;
    c.learning_starts = 32;
    c.buffer_capacity = 10000;
    return c;
}

} // namespace

TEST_CASE("degenerate Gaussian at the mean maps to zero") {
    auto cfg = small_cfg<double>(2, 3);
    cfg.z_max = 3.0;
    Rng rng(1);
    ActorCritic<double> ac(cfg, rng);
    ac.policy = constant_policy<double>(2, 3, 0.0, kLogStdMin); // sigma ~ 2e-9
    const float obs[2] = {0.4f, -0.2f};
    auto s = ac.sample_latent(obs, rng, false);
    for (double zi : s.z) CHECK(std::abs(zi) < 1e-6);

    auto det = ac.sample_latent(obs, rng, true);
    for (double zi : det.z) CHECK(zi == 0.0);
    CHECK(det.log_prob == 0.0); // unset in deterministic mode
}

TEST_CASE("squash correction at the origin: log_prob = -0.5 log(2 pi)") {
    auto cfg = small_cfg<double>(2, 1);
    cfg.z_max = 1.0;
    Rng rng(2);
    ActorCritic<double> ac(cfg, rng);
    ac.policy = constant_policy<double>(2, 1, 0.0, 0.0); // mu = 0, sigma = 1
    const float obs[2] = {0.0f, 0.0f};
    const double z0 = 0.0;
    CHECK(ac.log_prob_latent(obs, &z0) == doctest::Approx(-0.5 * kLogTwoPi).epsilon(1e-12));
}

TEST_CASE("sampled log_prob agrees with the density at the sampled point") {
    auto cfg = small_cfg<double>(3, 2);
    cfg.z_max = 2.0;
    Rng rng(3);
    ActorCritic<double> ac(cfg, rng);
    const float obs[3] = {0.5f, -0.5f, 1.0f};
    for (int t = 0; t < 50; ++t) {
        auto s = ac.sample_latent(obs, rng, false);
        const double lp = ac.log_prob_latent(obs, s.z.data());
        CHECK(lp == doctest::Approx(s.log_prob).epsilon(1e-6));
    }
}

TEST_CASE("empirical mean of squashed samples with mu = 0 is near zero") {
    auto cfg = small_cfg<double>(1, 1);
    cfg.z_max = 3.0;
    Rng rng(5);
    ActorCritic<double> ac(cfg, rng);
    ac.policy = constant_policy<double>(1, 1, 0.0, 0.0);
    const float obs[1] = {0.0f};
    const int n = 100000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        const double z = ac.sample_latent(obs, rng, false).z[0];
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double se = std::sqrt(var / n);
    INFO("mean=", mean, " se=", se);
    CHECK(std::abs(mean) < 3 * se + 1e-12);
}

TEST_CASE("squashed density integrates to one on (-z_max, z_max), D = 1") {
    auto cfg = small_cfg<double>(1, 1);
    cfg.z_max = 2.0;
    Rng rng(7);
    ActorCritic<double> ac(cfg, rng);
    ac.policy = constant_policy<double>(1, 1, 0.4, -0.3);
    const float obs[1] = {0.0f};
    const int n = 4000;
    const double lo = -2.0, hi = 2.0, cell = (hi - lo) / n;
    double mass = 0;
    for (int i = 0; i < n; ++i) {
        const double z = lo + (i + 0.5) * cell;
        mass += std::exp(ac.log_prob_latent(obs, &z)) * cell;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("soft target arithmetic") {
    // frozen networks returning Q' = (1.0, 2.0), logpi = -1, alpha = 0.1
    CHECK(soft_target<double>(0.5, false, 0.99, 0.1, 1.0, 2.0, -1.0) == doctest::Approx(1.589));
    // terminal cuts the bootstrap
    CHECK(soft_target<double>(0.5, true, 0.99, 0.1, 1.0, 2.0, -1.0) == 0.5);
    // zero discount
    CHECK(soft_target<double>(0.7, false, 0.0, 0.1, 1.0, 2.0, -1.0) == doctest::Approx(0.7));
}

TEST_CASE("critic_target: terminal and zero-discount batches reduce to rewards") {
    auto cfg = small_cfg<double>(2, 1);
    Rng rng(11);
    ActorCritic<double> ac(cfg, rng);
    for (int i = 0; i < 40; ++i) {
        Transition t;
        t.s = {0.1f, 0.2f};
        t.z = {0.3f};
        t.r = static_cast<float>(i) / 10;
        t.s_next = {0.0f, 0.0f};
        t.terminated = true;
        ac.buffer.push(t);
    }
    std::vector<size_t> idx{0, 5, 17};
    auto y = ac.critic_target(idx, rng);
    CHECK(y(0, 0) == doctest::Approx(0.0));
    CHECK(y(1, 0) == doctest::Approx(0.5));
    CHECK(y(2, 0) == doctest::Approx(1.7));

    // gamma = 0: even without termination y = r
    ac.cfg.gamma = 0.0;
    for (int i = 0; i < 40; ++i) {
        Transition t;
        t.s = {0.1f, 0.2f};
        t.z = {0.3f};
        t.r = 2.5f;
        t.s_next = {0.0f, 0.0f};
        t.terminated = false;
        t.truncated = true; // truncation alone must not cut the bootstrap
        ac.buffer.push(t);
    }
    std::vector<size_t> idx2{40, 41};
    auto y2 = ac.critic_target(idx2, rng);
    CHECK(y2(0, 0) == doctest::Approx(2.5));
    CHECK(y2(1, 0) == doctest::Approx(2.5));
}

TEST_CASE("truncated transitions bootstrap, terminated do not") {
    auto cfg = small_cfg<double>(1, 1);
    cfg.gamma = 1.0;
    cfg.alpha = 0.0;
    Rng rng(13);
    ActorCritic<double> ac(cfg, rng);
    ac.q1_target = constant_critic<double>(2, 5.0);
    ac.q2_target = constant_critic<double>(2, 7.0);
    Transition t;
    t.s = {0.0f};
    t.z = {0.0f};
    t.r = 1.0f;
    t.s_next = {0.0f};
    t.terminated = false;
    t.truncated = true;
    ac.buffer.push(t);
    t.terminated = true;
    t.truncated = false;
    ac.buffer.push(t);
    auto y = ac.critic_target({0, 1}, rng);
    CHECK(y(0, 0) == doctest::Approx(6.0)); // r + min(5,7)
    CHECK(y(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("update below learning_starts is a skipped no-op") {
    auto cfg = small_cfg<double>(2, 1);
    cfg.learning_starts = 100;
    Rng rng(17);
    ActorCritic<double> ac(cfg, rng);
    auto before = ac.policy.layers[0].W.value();
    for (int i = 0; i < 50; ++i) {
        Transition t;
        t.s = {0.0f, 0.0f};
        t.z = {0.1f};
        t.r = 0.0f;
        t.s_next = {0.0f, 0.0f};
        ac.buffer.push(t);
    }
    auto res = ac.update(rng);
    CHECK(res.skipped);
    CHECK(ac.policy_step_count() == 0);
    for (size_t i = 0; i < before.size(); ++i) CHECK(ac.policy.layers[0].W.value().d[i] == before.d[i]);
}

TEST_CASE("critic loss is zero at a fixed point and leaves critics unchanged") {
    auto cfg = small_cfg<double>(2, 1);
    cfg.gamma = 0.0; // y = r, no dependence on targets
    Rng rng(19);
    ActorCritic<double> ac(cfg, rng);
    // reward equal to the critics' current prediction at (s, z): use zero
    // critics and zero rewards
    ac.q1 = constant_critic<double>(3, 0.0);
    ac.q2 = constant_critic<double>(3, 0.0);
    ac.q1_target = ac.q1.clone();
    ac.q2_target = ac.q2.clone();
    for (int i = 0; i < 64; ++i) {
        Transition t;
        t.s = {0.3f, -0.1f};
        t.z = {0.2f};
        t.r = 0.0f;
        t.s_next = {0.3f, -0.1f};
        ac.buffer.push(t);
    }
    auto w_before = ac.q1.layers[0].W.value();
    auto res = ac.update(rng);
    CHECK_FALSE(res.skipped);
    CHECK(res.critic_loss == 0.0f);
    for (size_t i = 0; i < w_before.size(); ++i) CHECK(ac.q1.layers[0].W.value().d[i] == w_before.d[i]);
}

TEST_CASE("freshly zeroed critic heads give q_value 0 and min works") {
    auto cfg = small_cfg<double>(2, 2);
    Rng rng(23);
    ActorCritic<double> ac(cfg, rng);
    ac.q1 = constant_critic<double>(4, 0.0);
    ac.q2 = constant_critic<double>(4, 0.0);
    const float obs[2] = {1.0f, 2.0f};
    const double z[2] = {0.5, -0.5};
    CHECK(ac.q_value(obs, z) == 0.0);

    ac.q1 = constant_critic<double>(4, 2.0);
    ac.q2 = constant_critic<double>(4, 5.0);
    CHECK(ac.q_value(obs, z) == 2.0);
}

TEST_CASE("polyak recurrence: two 0.01 steps from 0 toward 1 give 0.0199") {
    auto target = constant_critic<double>(2, 0.0);
    auto online = constant_critic<double>(2, 1.0);
    ad::polyak_update(target, online, 0.01);
    ad::polyak_update(target, online, 0.01);
    CHECK(target.layers[0].b.value()(0, 0) == doctest::Approx(0.0199).epsilon(1e-12));
}

TEST_CASE("polyak contraction: gap shrinks by (1 - tau)^k") {
    Rng rng(29);
    auto online = ad::Mlp<float>::make({2, 8, 1}, ad::Activation::tanh, ad::Activation::identity, rng);
    auto target = ad::Mlp<float>::make({2, 8, 1}, ad::Activation::tanh, ad::Activation::identity, rng);
    const float tau = 0.05f;
    // initial gap on one coordinate
    const double gap0 = std::abs(target.layers[0].W.value()(0, 0) - online.layers[0].W.value()(0, 0));
    const int k = 20;
    for (int i = 0; i < k; ++i) ad::polyak_update(target, online, tau);
    const double gap = std::abs(target.layers[0].W.value()(0, 0) - online.layers[0].W.value()(0, 0));
    CHECK(gap == doctest::Approx(gap0 * std::pow(1.0 - tau, k)).epsilon(1e-4));
}

TEST_CASE("replay buffer: FIFO eviction and uniform sampling") {
    ReplayBuffer buf(100);
    for (int i = 0; i < 250; ++i) {
        Transition t;
        t.r = static_cast<float>(i);
        buf.push(t);
    }
    CHECK(buf.size() == 100);
    // oldest surviving entry is 150
    float lo = 1e9f;
    for (size_t i = 0; i < buf.size(); ++i) lo = std::min(lo, buf.at(i).r);
    CHECK(lo == 150.0f);

    Rng rng(31);
    std::vector<int> counts(100, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i)
        for (size_t j : buf.sample_indices(1, rng)) counts[j]++;
    const double expect = draws / 100.0;
    const double se = std::sqrt(draws * 0.01 * 0.99);
    for (int c : counts) CHECK(std::abs(c - expect) < 5 * se);
}

TEST_CASE("actor loss gradient matches finite differences on a frozen critic") {
    Rng rng(37);
    const int obs = 2, D = 2, n = 6;
    auto policy = ad::Mlp<double>::make({obs, 8, 2 * D}, ad::Activation::tanh, ad::Activation::identity, rng);
    auto q1 = ad::Mlp<double>::make({obs + D, 8, 1}, ad::Activation::tanh, ad::Activation::identity, rng);
    auto q2 = ad::Mlp<double>::make({obs + D, 8, 1}, ad::Activation::tanh, ad::Activation::identity, rng);

    Mat<double> s(n, obs), xi(n, D);
    for (auto& v : s.d) v = rng.uniform(-1, 1);
    for (auto& v : xi.d) v = rng.normal();

    auto loss_fn = [&]() { return actor_loss_graph(policy, q1, q2, s, xi, 0.1, 1.5).value()(0, 0); };

    auto params = policy.params();
    {
        auto loss = actor_loss_graph(policy, q1, q2, s, xi, 0.1, 1.5);
        auto qp = q1.params();
        for (auto p : q2.params()) qp.push_back(p);
        ad::set_requires_grad(qp, false);
        ad::backward(loss);
        ad::set_requires_grad(qp, true);
    }

    const double h = 1e-5;
    for (const auto& param : params) {
        auto& vals = const_cast<ad::Var<double>&>(param).value();
        REQUIRE(param.has_grad());
        for (size_t i = 0; i < vals.size(); i += std::max<size_t>(1, vals.size() / 4)) {
            const double orig = vals.d[i];
            vals.d[i] = orig + h;
            const double up = loss_fn();
            vals.d[i] = orig - h;
            const double dn = loss_fn();
            vals.d[i] = orig;
            const double fd = (up - dn) / (2 * h);
            const double an = param.grad().d[i];
            if (std::abs(an) < 1e-6 && std::abs(fd) < 1e-6) continue;
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            INFO("analytic=", an, " fd=", fd);
            CHECK(rel < 1e-3);
        }
    }
}

TEST_CASE("Q converges to immediate rewards on a 2-state bandit (gamma = 0)") {
    // deterministic bandit-like MDP: two one-hot states with fixed rewards,
    // actions irrelevant
    auto cfg = small_cfg<float>(2, 1);
    cfg.gamma = 0.0f;
    cfg.alpha = 0.01f;
    cfg.hidden = {32, 32};
    cfg.batch_size = 64;
    cfg.learning_starts = 64;
    cfg.lr_q = 3e-3f;
    Rng rng(41);
    ActorCritic<float> ac(cfg, rng);

    const float rewards[2] = {1.0f, -0.5f};
    Rng fill(43);
    for (int i = 0; i < 2000; ++i) {
        const int st = static_cast<int>(fill.uniform_int(2));
        Transition t;
        t.s = {st == 0 ? 1.0f : 0.0f, st == 1 ? 1.0f : 0.0f};
        t.z = {static_cast<float>(fill.uniform(-1, 1))};
        t.r = rewards[st];
        t.s_next = {0.0f, 0.0f};
        t.terminated = true;
        ac.buffer.push(t);
    }
    for (int i = 0; i < 5000; ++i) ac.update(rng);

    for (int st = 0; st < 2; ++st) {
        const float obs[2] = {st == 0 ? 1.0f : 0.0f, st == 1 ? 1.0f : 0.0f};
        // Q should match the state's reward for any in-support action
        for (float zf : {-0.5f, 0.0f, 0.5f}) {
            CHECK(std::abs(ac.q_value(obs, &zf) - rewards[st]) < 0.05);
        }
    }
}

TEST_CASE("checkpoint round trip") {
    auto cfg = small_cfg<float>(3, 2);
    Rng rng(47);
    ActorCritic<float> ac(cfg, rng);
    for (int i = 0; i < 64; ++i) {
        Transition t;
        t.s = {0.1f, 0.2f, 0.3f};
        t.z = {0.0f, 0.1f};
        t.r = 0.5f;
        t.s_next = {0.1f, 0.2f, 0.3f};
        ac.buffer.push(t);
    }
    ac.update(rng);

    io::BinWriter w;
    ac.save(w);
    io::BinReader r(w.buffer());
    ActorCritic<float> loaded;
    loaded.load(r);
    CHECK(loaded.cfg.obs_dim == 3);
    CHECK(loaded.cfg.latent_dim == 2);
    CHECK(loaded.policy_opt.step_count == ac.policy_opt.step_count);
    for (size_t l = 0; l < ac.policy.layers.size(); ++l)
        for (size_t i = 0; i < ac.policy.layers[l].W.value().size(); ++i)
            CHECK(loaded.policy.layers[l].W.value().d[i] == ac.policy.layers[l].W.value().d[i]);

    const float obs[3] = {0.1f, 0.2f, 0.3f};
    const float z[2] = {0.0f, 0.1f};
    CHECK(loaded.q_value(obs, z) == ac.q_value(obs, z));
}
