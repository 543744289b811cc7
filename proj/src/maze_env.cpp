#include "apc/envs.hpp"

#include <cmath>

namespace apc::envs {

double wrap_angle(double a) {
    constexpr double pi = 3.14159265358979323846;
    a = std::fmod(a + pi, 2 * pi);
    if (a < 0) a += 2 * pi;
    return a - pi;
}

MazeSpec MazeSpec::plus_maze() {
    MazeSpec s;
    s.rows = {
        "###########",
        "#####G#####",
        "#####.#####",
        "#####.#####",
        "#####.#####",
        "#G...S...G#",
        "#####.#####",
        "#####.#####",
        "#####.#####",
        "#####G#####",
        "###########",
    };
    return s;
}

MazeSpec MazeSpec::artery_maze() {
    MazeSpec s;
    s.rows = {
        "###########",
        "#.........#",
        "#.##G###G##",
        "#.#########",
        "#.#########",
        "#....S#####",
        "#.#########",
        "#.#########",
        "#.##G###G##",
        "#.........#",
        "###########",
    };
    return s;
}

MazeEnv::MazeEnv(MazeSpec spec) : spec_(std::move(spec)) {
    height_ = static_cast<int>(spec_.rows.size());
    width_ = height_ ? static_cast<int>(spec_.rows[0].size()) : 0;
    if (height_ < 3 || width_ < 3) throw ContractError("MazeEnv: grid too small");
    for (const auto& r : spec_.rows)
        if (static_cast<int>(r.size()) != width_) throw ContractError("MazeEnv: ragged grid");

    const double cx = width_ / 2.0, cy = height_ / 2.0;
    bool have_start = false;
    for (int r = 0; r < height_; ++r) {
        for (int c = 0; c < width_; ++c) {
            const char ch = spec_.rows[r][c];
            const double px = c + 0.5 - cx, py = r + 0.5 - cy;
            if (ch == 'G') goals_.emplace_back(px, py);
            if (ch == 'S') {
                start_ = {px, py};
                have_start = true;
            }
        }
    }
    if (goals_.empty()) throw ContractError("MazeEnv: no goals in grid");
    if (!have_start) start_ = {0.0, 0.0};
    if (spec_.goal_index < 0 || spec_.goal_index >= static_cast<int>(goals_.size()))
        throw ContractError("MazeEnv: goal_index out of range");
    if (wall_at(goals_[spec_.goal_index].first, goals_[spec_.goal_index].second))
        throw ContractError("MazeEnv: goal lies in a wall cell");
    if (wall_at(start_.first, start_.second)) throw ContractError("MazeEnv: start lies in a wall cell");
}

bool MazeEnv::wall_at(double x, double y) const {
    const double gx = x + width_ / 2.0, gy = y + height_ / 2.0;
    const int c = static_cast<int>(std::floor(gx));
    const int r = static_cast<int>(std::floor(gy));
    if (r < 0 || r >= height_ || c < 0 || c >= width_) return true;
    return spec_.rows[r][c] == '#';
}

std::vector<float> MazeEnv::reset(Rng& rng) {
    // uniform in the start disc; area-uniform radius via sqrt
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double rad = spec_.start_radius * std::sqrt(u1);
    const double ang = 2.0 * 3.14159265358979323846 * u2;
    x_ = start_.first + rad * std::cos(ang);
    y_ = start_.second + rad * std::sin(ang);
    vx_ = vy_ = 0.0;
    steps_ = 0;
    done_ = false;
    return observation();
}

void MazeEnv::set_state(double x, double y, double vx, double vy) {
    x_ = x;
    y_ = y;
    vx_ = vx;
    vy_ = vy;
    steps_ = 0;
    done_ = false;
}

EnvStep MazeEnv::step(const float* action) {
    if (done_) throw ContractError("MazeEnv::step: episode finished, reset first");
    double ax = std::clamp(static_cast<double>(action[0]), -1.0, 1.0);
    double ay = std::clamp(static_cast<double>(action[1]), -1.0, 1.0);

    // semi-implicit Euler with per-component speed clamp
    vx_ = std::clamp(vx_ + ax * spec_.dt, -spec_.max_speed, spec_.max_speed);
    vy_ = std::clamp(vy_ + ay * spec_.dt, -spec_.max_speed, spec_.max_speed);

    // axis-separated wall blocking: a blocked axis zeroes that velocity component
    const double nx = x_ + vx_ * spec_.dt;
    if (wall_at(nx, y_))
        vx_ = 0.0;
    else
        x_ = nx;
    const double ny = y_ + vy_ * spec_.dt;
    if (wall_at(x_, ny))
        vy_ = 0.0;
    else
        y_ = ny;

    ++steps_;
    const auto [gx, gy] = goals_[spec_.goal_index];
    const double dist = std::hypot(x_ - gx, y_ - gy);

    EnvStep out;
    out.reward = spec_.reward == MazeSpec::Reward::exp_neg_dist ? std::exp(-dist) - 1.0 : -dist;
    out.terminated = dist <= spec_.goal_radius;
    out.success = out.terminated;
    out.truncated = !out.terminated && steps_ >= spec_.max_steps;
    out.obs = observation();
    done_ = out.terminated || out.truncated;
    return out;
}

std::vector<float> MazeEnv::observation() const {
    return {static_cast<float>(x_), static_cast<float>(y_), static_cast<float>(vx_),
            static_cast<float>(vy_)};
}

} // namespace apc::envs
