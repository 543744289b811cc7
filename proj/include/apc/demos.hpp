#pragma once

// Scripted demonstration policies and rollout collection. The maze expert is
// an analytic BFS-waypoint PD controller; the car driver is pure pursuit with
// a speed cap and injected noise, tuned to land in the suboptimal-return band.

#include <memory>

#include "apc/data.hpp"
#include "apc/envs.hpp"
#include "apc/sac.hpp"

namespace apc::demos {

class DemoPolicy {
public:
    virtual ~DemoPolicy() = default;
    virtual void act(const envs::Env& env, const float* obs, Rng& rng, float* action) = 0;
    virtual void reset() {}
};

// Waypoint PD controller to a fixed goal of the maze in `spec`.
class MazeExpert final : public DemoPolicy {
public:
    MazeExpert(const envs::MazeSpec& spec, int goal_index, double kp = 1.6, double kd = 1.4);
    void act(const envs::Env& env, const float* obs, Rng& rng, float* action) override;

private:
    envs::MazeSpec spec_;
    int width_ = 0, height_ = 0;
    int goal_index_;
    double kp_, kd_;
    std::vector<int> dist_; // BFS distance-to-goal per cell, -1 for walls
    std::pair<double, double> cell_center(int r, int c) const;
    int cell_of(double x, double y, int* r, int* c) const;
};

// Pure pursuit with speed cap, steering noise and throttle noise.
class SuboptimalDriver final : public DemoPolicy {
public:
    explicit SuboptimalDriver(double speed_cap = 1.0, double steer_noise = 0.1,
                              double throttle_noise = 0.05)
        : speed_cap_(speed_cap), steer_noise_(steer_noise), throttle_noise_(throttle_noise) {}
    void act(const envs::Env& env, const float* obs, Rng& rng, float* action) override;

private:
    double speed_cap_, steer_noise_, throttle_noise_;
};

// Deterministic policy loaded from an actor checkpoint.
class TrainedPolicy final : public DemoPolicy {
public:
    explicit TrainedPolicy(const std::string& checkpoint_path);
    void act(const envs::Env& env, const float* obs, Rng& rng, float* action) override;

private:
    sac::ActorCritic<float> actor_;
};

// Rolls out `episodes` episodes of `policy` on `env`, recording every (s, a)
// pair plus episode boundaries and success statistics.
data::DemoDataset collect_demos(DemoPolicy& policy, envs::Env& env, int episodes, Rng& rng,
                                const std::string& env_id, const std::string& task_id);

} // namespace apc::demos
