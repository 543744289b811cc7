#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "apc/envs.hpp"

using namespace apc;
using namespace apc::envs;

namespace {

// minimal pure-pursuit driver used to exercise full laps
struct TestDriver {
    double speed_cap;
    float steer_gain = 2.5f;

    void act(const CarEnv& env, float* a) const {
        const auto pose = env.locate(env.x(), env.y());
        const auto [tx, ty] = env.waypoint(pose.segment + 3);
        const double desired = std::atan2(ty - env.y(), tx - env.x());
        const double err = wrap_angle(desired - env.heading());
        a[0] = static_cast<float>(std::clamp(steer_gain * err, -1.0, 1.0));
        a[1] = env.forward_speed() < speed_cap ? 0.2f : -1.0f;
        a[2] = -1.0f; // no brake
    }
};

} // namespace

TEST_CASE("angle wrap: 3 pi / 2 maps to -pi / 2") {
    CHECK(wrap_angle(3 * 3.14159265358979323846 / 2) == doctest::Approx(-3.14159265358979323846 / 2));
    CHECK(wrap_angle(0.3) == doctest::Approx(0.3));
    CHECK(wrap_angle(-4 * 3.14159265358979323846) == doctest::Approx(0.0));
}

TEST_CASE("maze: zero-area start region always resets to the center at rest") {
    auto spec = MazeSpec::plus_maze();
    spec.start_radius = 0.0;
    MazeEnv env(spec);
    Rng rng(1);
    for (int i = 0; i < 5; ++i) {
        auto obs = env.reset(rng);
        CHECK(obs[0] == doctest::Approx(env.start_center().first));
        CHECK(obs[1] == doctest::Approx(env.start_center().second));
        CHECK(obs[2] == 0.0f);
        CHECK(obs[3] == 0.0f);
    }
}

TEST_CASE("maze: seeded resets reproduce bitwise") {
    MazeEnv env(MazeSpec::plus_maze());
    Rng r1(42), r2(42);
    auto o1 = env.reset(r1);
    MazeEnv env2(MazeSpec::plus_maze());
    auto o2 = env2.reset(r2);
    for (int j = 0; j < 4; ++j) CHECK(o1[j] == o2[j]);
}

TEST_CASE("maze: reset positions are uniform over the start disc") {
    MazeEnv env(MazeSpec::plus_maze());
    Rng rng(7);
    const int n = 10000;
    double sx = 0, sy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        auto obs = env.reset(rng);
        sx += obs[0];
        sy += obs[1];
        sxx += obs[0] * obs[0];
        syy += obs[1] * obs[1];
    }
    const auto [cx, cy] = env.start_center();
    const double mx = sx / n, my = sy / n;
    const double se_x = std::sqrt((sxx / n - mx * mx) / n);
    const double se_y = std::sqrt((syy / n - my * my) / n);
    CHECK(std::abs(mx - cx) < 3 * se_x + 1e-9);
    CHECK(std::abs(my - cy) < 3 * se_y + 1e-9);
}

TEST_CASE("maze: reward arithmetic at and near the goal") {
    auto spec = MazeSpec::plus_maze();
    spec.goal_index = 0;
    MazeEnv env(spec);
    Rng rng(3);
    env.reset(rng);
    const auto [gx, gy] = env.goal(0);

    // exactly at the goal: reward exp(0) - 1 = 0, terminated
    env.set_state(gx, gy, 0, 0);
    const float zero[2] = {0, 0};
    auto st = env.step(zero);
    CHECK(st.reward == doctest::Approx(0.0));
    CHECK(st.terminated);
    CHECK(st.success);

    // at distance ln 2 below the goal: reward exp(-ln 2) - 1 = -0.5
    env.set_state(gx, gy + std::log(2.0), 0, 0);
    st = env.step(zero);
    CHECK(st.reward == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("maze: zero action from rest leaves the position unchanged") {
    auto spec = MazeSpec::plus_maze();
    MazeEnv env(spec);
    Rng rng(5);
    env.reset(rng);
    env.set_state(0.0, 0.0, 0.0, 0.0);
    const auto [gx, gy] = env.goal(spec.goal_index);
    const double d0 = std::hypot(gx, gy);
    const float zero[2] = {0, 0};
    auto st = env.step(zero);
    CHECK(st.obs[0] == 0.0f);
    CHECK(st.obs[1] == 0.0f);
    CHECK(st.reward == doctest::Approx(std::exp(-d0) - 1.0));
}

TEST_CASE("maze: neg_dist reward variant") {
    auto spec = MazeSpec::plus_maze();
    spec.reward = MazeSpec::Reward::neg_dist;
    MazeEnv env(spec);
    Rng rng(5);
    env.reset(rng);
    const auto [gx, gy] = env.goal(spec.goal_index);
    env.set_state(gx, gy + 2.0, 0, 0);
    const float zero[2] = {0, 0};
    auto st = env.step(zero);
    CHECK(st.reward == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("maze: walls are impenetrable under random rollouts") {
    MazeEnv env(MazeSpec::plus_maze());
    Rng rng(11);
    for (int ep = 0; ep < 30; ++ep) {
        env.reset(rng);
        for (int t = 0; t < 200; ++t) {
            float a[2] = {static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1))};
            auto st = env.step(a);
            CHECK_FALSE(env.wall_at(st.obs[0], st.obs[1]));
            CHECK(st.reward <= 0.0);
            CHECK(st.reward > -1.0);
            for (float v : st.obs) CHECK(std::isfinite(v));
            if (st.terminated || st.truncated) break;
        }
    }
}

TEST_CASE("maze: truncation at max_steps and success-terminal reward range") {
    auto spec = MazeSpec::plus_maze();
    spec.max_steps = 50;
    MazeEnv env(spec);
    Rng rng(13);
    env.reset(rng);
    const float a[2] = {0, 0};
    EnvStep st;
    int steps = 0;
    do {
        st = env.step(a);
        ++steps;
    } while (!st.terminated && !st.truncated);
    CHECK(steps == 50);
    CHECK(st.truncated);
    CHECK_FALSE(st.terminated);

    // a success step's reward lies in (exp(-0.5) - 1, 0]
    auto spec2 = MazeSpec::plus_maze();
    MazeEnv env2(spec2);
    env2.reset(rng);
    const auto [gx, gy] = env2.goal(spec2.goal_index);
    env2.set_state(gx + 0.45, gy, 0, 0);
    auto s2 = env2.step(a);
    CHECK(s2.terminated);
    CHECK(s2.reward > std::exp(-0.5) - 1.0);
    CHECK(s2.reward <= 0.0);
}

TEST_CASE("maze: identical seed and action sequence give bit-exact trajectories") {
    MazeEnv e1(MazeSpec::plus_maze()), e2(MazeSpec::plus_maze());
    Rng r1(99), r2(99), act_rng(5);
    std::vector<std::array<float, 2>> actions(150);
    for (auto& a : actions)
        a = {static_cast<float>(act_rng.uniform(-1, 1)), static_cast<float>(act_rng.uniform(-1, 1))};
    auto o1 = e1.reset(r1), o2 = e2.reset(r2);
    for (int j = 0; j < 4; ++j) REQUIRE(o1[j] == o2[j]);
    for (const auto& a : actions) {
        auto s1 = e1.step(a.data());
        auto s2 = e2.step(a.data());
        REQUIRE(s1.reward == s2.reward);
        for (int j = 0; j < 4; ++j) REQUIRE(s1.obs[j] == s2.obs[j]);
        if (s1.terminated || s1.truncated) break;
    }
}

TEST_CASE("car: deterministic resets, zero velocities, zero heading error") {
    CarEnv env(CarSpec::default_track());
    Rng rng(1);
    auto o1 = env.reset(rng);
    CarEnv env2(CarSpec::default_track());
    auto o2 = env2.reset(rng);
    REQUIRE(o1.size() == o2.size());
    for (size_t i = 0; i < o1.size(); ++i) CHECK(o1[i] == o2[i]);

    CHECK(o1[2] == 0.0f); // heading error
    CHECK(o1[3] == 0.0f); // v_fwd
    CHECK(o1[4] == 0.0f); // v_side
    CHECK(o1[5] == 0.0f); // omega
    // centered: d_left = d_right = half width
    CHECK(o1[0] == doctest::Approx(env.spec().half_width));
    CHECK(o1[1] == doctest::Approx(env.spec().half_width));
}

TEST_CASE("car: lookahead waypoints on the straight are (j * spacing, 0)") {
    CarEnv env(CarSpec::default_track());
    Rng rng(1);
    auto obs = env.reset(rng);
    for (int j = 1; j <= env.spec().lookahead; ++j) {
        CHECK(obs[6 + 2 * (j - 1)] == doctest::Approx(2.0 * j).epsilon(1e-6));
        CHECK(obs[6 + 2 * (j - 1) + 1] == doctest::Approx(0.0));
    }
}

TEST_CASE("car: step with no new tile pays the -0.1 penalty") {
    CarEnv env(CarSpec::default_track());
    Rng rng(1);
    env.reset(rng);
    // standing still: tile 0 becomes visited on the first step, then no others
    const float idle[3] = {0, -1, -1};
    auto s1 = env.step(idle);
    CHECK(s1.new_tiles == 1);
    auto s2 = env.step(idle);
    CHECK(s2.new_tiles == 0);
    CHECK(s2.reward == doctest::Approx(-0.1));
}

TEST_CASE("car: straight-line coast keeps d_left + d_right at the track width") {
    CarEnv env(CarSpec::default_track());
    Rng rng(1);
    env.reset(rng);
    const float a[3] = {0.0f, -0.2f, -1.0f};
    for (int t = 0; t < 40; ++t) {
        auto st = env.step(a);
        CHECK(st.obs[0] + st.obs[1] == doctest::Approx(2 * env.spec().half_width).epsilon(1e-5));
        CHECK(std::abs(st.obs[2]) < 1e-3); // stays aligned on the straight
    }
}

TEST_CASE("car: full lap collects exactly 1000 tile reward") {
    CarEnv env(CarSpec::default_track());
    Rng rng(1);
    env.reset(rng);
    TestDriver driver{8.0};
    double tile_total = 0, ret = 0;
    EnvStep st;
    int steps = 0;
    const double tile_reward = 1000.0 / env.tile_count();
    while (true) {
        float a[3];
        driver.act(env, a);
        st = env.step(a);
        tile_total += st.new_tiles * tile_reward;
        ret += st.reward;
        ++steps;
        if (st.terminated || st.truncated) break;
    }
    INFO("steps=", steps, " visited=", env.tiles_visited(), "/", env.tile_count(), " return=", ret);
    CHECK(st.success);
    CHECK(st.terminated);
    CHECK(tile_total == doctest::Approx(1000.0).epsilon(1e-9));
    // per-episode return bound
    CHECK(ret <= 1000.0 - 0.1);
    // tile accounting identity
    CHECK(tile_total ==
          doctest::Approx(1000.0 * env.tiles_visited() / env.tile_count()).epsilon(1e-9));
}

TEST_CASE("car: partial episode tile total is 1000 * fraction visited") {
    CarEnv env(CarSpec::default_track());
    Rng rng(1);
    env.reset(rng);
    TestDriver driver{2.0};
    double tile_total = 0;
    for (int t = 0; t < 60; ++t) {
        float a[3];
        driver.act(env, a);
        auto st = env.step(a);
        tile_total += st.new_tiles * (1000.0 / env.tile_count());
        if (st.terminated || st.truncated) break;
    }
    CHECK(tile_total ==
          doctest::Approx(1000.0 * env.tiles_visited() / env.tile_count()).epsilon(1e-9));
    CHECK(env.tiles_visited() < env.tile_count());
}

TEST_CASE("car: identical action sequences give bit-exact trajectories") {
    CarEnv e1(CarSpec::default_track()), e2(CarSpec::default_track());
    Rng rng(1), act_rng(9);
    e1.reset(rng);
    e2.reset(rng);
    for (int t = 0; t < 120; ++t) {
        float a[3] = {static_cast<float>(act_rng.uniform(-1, 1)),
                      static_cast<float>(act_rng.uniform(-1, 1)),
                      static_cast<float>(act_rng.uniform(-1, 1))};
        auto s1 = e1.step(a);
        auto s2 = e2.step(a);
        REQUIRE(s1.reward == s2.reward);
        REQUIRE(s1.obs.size() == s2.obs.size());
        for (size_t j = 0; j < s1.obs.size(); ++j) REQUIRE(s1.obs[j] == s2.obs[j]);
        for (float v : s1.obs) REQUIRE(std::isfinite(v));
        if (s1.terminated || s1.truncated) break;
    }
}
