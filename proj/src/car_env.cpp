#include "apc/envs.hpp"

#include <cmath>

namespace apc::envs {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

CarSpec CarSpec::default_track() {
    // rounded rectangle: 50 x 30 outer size, corner radius 10, sampled at
    // roughly 2-unit spacing
    CarSpec s;
    const double w = 50, h = 30, r = 10;
    const double spacing = 2.0;
    auto arc = [&](double cx, double cy, double a0, double a1) {
        const double len = std::abs(a1 - a0) * r;
        const int n = std::max(2, static_cast<int>(std::round(len / spacing)));
        for (int i = 0; i < n; ++i) {
            const double a = a0 + (a1 - a0) * i / n;
            s.centerline.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
        }
    };
    auto line = [&](double x0, double y0, double x1, double y1) {
        const double len = std::hypot(x1 - x0, y1 - y0);
        const int n = std::max(1, static_cast<int>(std::round(len / spacing)));
        for (int i = 0; i < n; ++i)
            s.centerline.emplace_back(x0 + (x1 - x0) * i / n, y0 + (y1 - y0) * i / n);
    };
    // counter-clockwise, starting on the bottom straight
    line(-(w / 2 - r), -h / 2, w / 2 - r, -h / 2);
    arc(w / 2 - r, -(h / 2 - r), -kPi / 2, 0);
    line(w / 2, -(h / 2 - r), w / 2, h / 2 - r);
    arc(w / 2 - r, h / 2 - r, 0, kPi / 2);
    line(w / 2 - r, h / 2, -(w / 2 - r), h / 2);
    arc(-(w / 2 - r), h / 2 - r, kPi / 2, kPi);
    line(-w / 2, h / 2 - r, -w / 2, -(h / 2 - r));
    arc(-(w / 2 - r), -(h / 2 - r), kPi, 1.5 * kPi);
    return s;
}

CarEnv::CarEnv(CarSpec spec) : spec_(std::move(spec)) {
    if (spec_.centerline.size() < 8) throw ContractError("CarEnv: centerline too short");
    visited_.assign(spec_.centerline.size(), 0);
}

std::pair<double, double> CarEnv::waypoint(int idx) const {
    const int m = tile_count();
    int k = idx % m;
    if (k < 0) k += m;
    return spec_.centerline[k];
}

CarEnv::TrackPose CarEnv::locate(double x, double y) const {
    const int m = tile_count();
    double best = 1e300;
    int best_seg = 0;
    double best_lat = 0, best_ang = 0;
    for (int i = 0; i < m; ++i) {
        const auto [ax, ay] = spec_.centerline[i];
        const auto [bx, by] = spec_.centerline[(i + 1) % m];
        const double dx = bx - ax, dy = by - ay;
        const double len2 = dx * dx + dy * dy;
        double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double px = ax + t * dx, py = ay + t * dy;
        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
        if (d2 < best) {
            best = d2;
            best_seg = i;
            // positive lateral offset = left of the direction of travel
            const double cross = dx * (y - py) - dy * (x - px);
            best_lat = (cross >= 0 ? 1.0 : -1.0) * std::sqrt(d2);
            best_ang = std::atan2(dy, dx);
        }
    }
    return {best_seg, best_lat, best_ang, std::abs(best_lat)};
}

std::vector<float> CarEnv::reset(Rng&) {
    // deterministic reset: at rest, centered on tile 0, aligned with the track
    const auto [ax, ay] = spec_.centerline[0];
    const auto [bx, by] = spec_.centerline[1];
    x_ = ax;
    y_ = ay;
    theta_ = std::atan2(by - ay, bx - ax);
    u_ = v_ = omega_ = 0;
    visited_.assign(spec_.centerline.size(), 0);
    tiles_visited_ = 0;
    steps_ = 0;
    done_ = false;
    return observation();
}

EnvStep CarEnv::step(const float* action) {
    if (done_) throw ContractError("CarEnv::step: episode finished, reset first");
    const double steer_in = std::clamp(static_cast<double>(action[0]), -1.0, 1.0);
    const double thr_in = std::clamp(static_cast<double>(action[1]), -1.0, 1.0);
    const double brk_in = std::clamp(static_cast<double>(action[2]), -1.0, 1.0);
    const double steer = steer_in * spec_.max_steer;
    const double throttle = 0.5 * (thr_in + 1.0); // [0, 1]
    const double brake = 0.5 * (brk_in + 1.0);

    const TrackPose pose = locate(x_, y_);
    const bool grass = pose.dist > spec_.half_width;
    const double engine = spec_.engine_accel * throttle * (grass ? spec_.grass_accel_scale : 1.0);
    const double lat_damp = grass ? spec_.lat_damp_grass : spec_.lat_damp_road;
    const double slip_gain = grass ? spec_.slip_gain_grass : spec_.slip_gain_road;
    const double dt = spec_.dt;

    u_ += (engine - spec_.drag * u_) * dt;
    u_ = std::max(0.0, u_ - spec_.brake_decel * brake * dt); // no reverse gear

    const double omega_ss = u_ * std::tan(steer) / spec_.wheelbase;
    omega_ += (omega_ss - omega_) * std::min(1.0, 5.0 * dt);
    theta_ = wrap_angle(theta_ + omega_ * dt);

    // lateral slip: centripetal feed bled off by tire damping
    v_ += (-slip_gain * u_ * omega_ - lat_damp * v_) * dt;

    x_ += (u_ * std::cos(theta_) - v_ * std::sin(theta_)) * dt;
    y_ += (u_ * std::sin(theta_) + v_ * std::cos(theta_)) * dt;

    ++steps_;
    const TrackPose after = locate(x_, y_);
    EnvStep out;
    out.new_tiles = 0;
    if (after.dist <= spec_.half_width && !visited_[after.segment]) {
        visited_[after.segment] = 1;
        ++tiles_visited_;
        out.new_tiles = 1;
    }
    const double tile_reward = 1000.0 / tile_count();
    out.reward = -0.1 + tile_reward * out.new_tiles;

    const bool lap_done = tiles_visited_ == tile_count();
    const bool off_track = after.dist > spec_.off_track_limit * spec_.half_width;
    out.terminated = lap_done || off_track;
    out.success = lap_done;
    out.truncated = !out.terminated && steps_ >= spec_.max_steps;
    out.obs = observation();
    done_ = out.terminated || out.truncated;
    return out;
}

std::vector<float> CarEnv::observation() const {
    const TrackPose pose = locate(x_, y_);
    std::vector<float> obs;
    obs.reserve(obs_dim());
    obs.push_back(static_cast<float>(spec_.half_width - pose.lateral)); // d_left
    obs.push_back(static_cast<float>(spec_.half_width + pose.lateral)); // d_right
    obs.push_back(static_cast<float>(wrap_angle(theta_ - pose.tangent_angle)));
    obs.push_back(static_cast<float>(u_));
    obs.push_back(static_cast<float>(v_));
    obs.push_back(static_cast<float>(omega_));
    // next L waypoints in the car frame
    const double c = std::cos(-theta_), s = std::sin(-theta_);
    for (int j = 1; j <= spec_.lookahead; ++j) {
        const auto [wx, wy] = waypoint(pose.segment + j);
        const double rx = wx - x_, ry = wy - y_;
        obs.push_back(static_cast<float>(rx * c - ry * s));
        obs.push_back(static_cast<float>(rx * s + ry * c));
    }
    return obs;
}

} // namespace apc::envs
