#pragma once

// Deterministic, dependency-free environments. Actions arrive in the
// normalized box [-1, 1]^act_dim; observations are raw physical quantities
// (agents apply their own input scaling). All internal state is double
// precision so trajectories are bit-reproducible given (seed, actions).

#include <memory>
#include <string>
#include <vector>

#include "apc/errors.hpp"
#include "apc/rng.hpp"

namespace apc::envs {

struct EnvStep {
    std::vector<float> obs;
    double reward = 0;
    bool terminated = false;
    bool truncated = false;
    bool success = false;
    int new_tiles = 0; // car only
};

class Env {
public:
    virtual ~Env() = default;
    virtual int obs_dim() const = 0;
    virtual int act_dim() const = 0;
    virtual int max_steps() const = 0;
    virtual std::vector<float> reset(Rng& rng) = 0;
    virtual EnvStep step(const float* action) = 0;
    virtual std::unique_ptr<Env> clone_spec() const = 0; // fresh copy, same spec
};

// ---- point-mass maze ----

struct MazeSpec {
    // '#' wall, '.' free, 'G' goal, 'S' start-region center
    std::vector<std::string> rows;
    int goal_index = 0; // active task: which 'G' (row-major scan order)
    double goal_radius = 0.5;
    double start_radius = 0.25;
    int max_steps = 200;
    double dt = 0.1;
    double max_speed = 5.0;
    enum class Reward { exp_neg_dist, neg_dist } reward = Reward::exp_neg_dist;

    // 11x11 plus-shaped layout, four goal arms around the center
    static MazeSpec plus_maze();

    // 11x11 artery layout: a central spoke feeds one vertical artery and two
    // corridors; the goals sit in one-cell stubs off those corridors. Routes
    // to far goals pass the near goals' stub entrances, so demonstrations
    // for one task cover most of the route to the others.
    static MazeSpec artery_maze();
};

class MazeEnv final : public Env {
public:
    explicit MazeEnv(MazeSpec spec);

    int obs_dim() const override { return 4; }
    int act_dim() const override { return 2; }
    int max_steps() const override { return spec_.max_steps; }
    std::vector<float> reset(Rng& rng) override;
    EnvStep step(const float* action) override;
    std::unique_ptr<Env> clone_spec() const override { return std::make_unique<MazeEnv>(spec_); }

    const MazeSpec& spec() const { return spec_; }
    int goal_count() const { return static_cast<int>(goals_.size()); }
    // goal positions in centered coordinates, scan order
    std::pair<double, double> goal(int i) const { return goals_[i]; }
    std::pair<double, double> start_center() const { return start_; }
    bool wall_at(double x, double y) const; // centered coordinates

    // direct state access for scripted controllers and tests
    double x() const { return x_; }
    double y() const { return y_; }
    double vx() const { return vx_; }
    double vy() const { return vy_; }
    void set_state(double x, double y, double vx, double vy);

private:
    std::vector<float> observation() const;

    MazeSpec spec_;
    int width_ = 0, height_ = 0;
    std::vector<std::pair<double, double>> goals_;
    std::pair<double, double> start_{0, 0};
    double x_ = 0, y_ = 0, vx_ = 0, vy_ = 0;
    int steps_ = 0;
    bool done_ = true;
};

// ---- top-down car on a closed track ----

struct CarSpec {
    std::vector<std::pair<double, double>> centerline; // closed polyline
    double half_width = 3.0;
    int lookahead = 5;
    int max_steps = 300;
    double dt = 0.1;

    // physics constants (simplified bicycle with lateral slip)
    double wheelbase = 1.5;
    double max_steer = 0.55;        // rad
    double engine_accel = 6.0;      // full-throttle acceleration
    double brake_decel = 8.0;
    double drag = 0.25;             // linear drag coefficient
    double lat_damp_road = 6.0;     // lateral velocity damping on asphalt
    double lat_damp_grass = 1.5;    // reduced grip on grass
    double slip_gain_road = 0.3;    // centripetal slip feed
    double slip_gain_grass = 0.9;
    double grass_accel_scale = 0.35;
    double off_track_limit = 2.0;   // termination at limit * half_width

    // rounded-rectangle circuit, ~2-unit tile spacing
    static CarSpec default_track();
};

class CarEnv final : public Env {
public:
    explicit CarEnv(CarSpec spec);

    int obs_dim() const override { return 6 + 2 * spec_.lookahead; }
    int act_dim() const override { return 3; } // steer, accelerate, brake
    int max_steps() const override { return spec_.max_steps; }
    std::vector<float> reset(Rng& rng) override;
    EnvStep step(const float* action) override;
    std::unique_ptr<Env> clone_spec() const override { return std::make_unique<CarEnv>(spec_); }

    const CarSpec& spec() const { return spec_; }
    int tile_count() const { return static_cast<int>(spec_.centerline.size()); }
    int tiles_visited() const { return tiles_visited_; }

    double x() const { return x_; }
    double y() const { return y_; }
    double heading() const { return theta_; }
    double forward_speed() const { return u_; }

    // geometry probes shared with the scripted driver
    struct TrackPose {
        int segment;          // nearest centerline segment index
        double lateral;       // signed offset, positive to the left of travel
        double tangent_angle; // direction of the nearest segment
        double dist;          // |lateral|
    };
    TrackPose locate(double x, double y) const;
    std::pair<double, double> waypoint(int idx) const; // wrapped centerline access

private:
    std::vector<float> observation() const;

    CarSpec spec_;
    double x_ = 0, y_ = 0, theta_ = 0;
    double u_ = 0, v_ = 0, omega_ = 0;
    std::vector<char> visited_;
    int tiles_visited_ = 0;
    int steps_ = 0;
    bool done_ = true;
};

double wrap_angle(double a); // into [-pi, pi]

} // namespace apc::envs
