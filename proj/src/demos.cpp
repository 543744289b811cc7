#include "apc/demos.hpp"

#include <cmath>
#include <deque>

namespace apc::demos {

using envs::CarEnv;
using envs::MazeEnv;

MazeExpert::MazeExpert(const envs::MazeSpec& spec, int goal_index, double kp, double kd)
    : spec_(spec), goal_index_(goal_index), kp_(kp), kd_(kd) {
    height_ = static_cast<int>(spec_.rows.size());
    width_ = static_cast<int>(spec_.rows[0].size());

    // BFS over free cells from the goal outward
    dist_.assign(width_ * height_, -1);
    int gr = -1, gc = -1, seen = 0;
    for (int r = 0; r < height_ && gr < 0; ++r)
        for (int c = 0; c < width_; ++c)
            if (spec_.rows[r][c] == 'G' && seen++ == goal_index) {
                gr = r;
                gc = c;
                break;
            }
    if (gr < 0) throw ContractError("MazeExpert: goal index not found");
    std::deque<std::pair<int, int>> queue{{gr, gc}};
    dist_[gr * width_ + gc] = 0;
    while (!queue.empty()) {
        auto [r, c] = queue.front();
        queue.pop_front();
        const int d = dist_[r * width_ + c];
        const int dr[4] = {1, -1, 0, 0}, dc[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const int nr = r + dr[k], nc = c + dc[k];
            if (nr < 0 || nr >= height_ || nc < 0 || nc >= width_) continue;
            if (spec_.rows[nr][nc] == '#' || dist_[nr * width_ + nc] >= 0) continue;
            dist_[nr * width_ + nc] = d + 1;
            queue.emplace_back(nr, nc);
        }
    }
}

std::pair<double, double> MazeExpert::cell_center(int r, int c) const {
    return {c + 0.5 - width_ / 2.0, r + 0.5 - height_ / 2.0};
}

int MazeExpert::cell_of(double x, double y, int* r, int* c) const {
    *c = static_cast<int>(std::floor(x + width_ / 2.0));
    *r = static_cast<int>(std::floor(y + height_ / 2.0));
    if (*r < 0 || *r >= height_ || *c < 0 || *c >= width_) return -1;
    return dist_[*r * width_ + *c];
}

void MazeExpert::act(const envs::Env&, const float* obs, Rng&, float* action) {
    const double x = obs[0], y = obs[1], vx = obs[2], vy = obs[3];
    int r, c;
    const int d = cell_of(x, y, &r, &c);
    double tx = x, ty = y;
    if (d == 0) {
        std::tie(tx, ty) = cell_center(r, c);
    } else if (d > 0) {
        // pursue the BFS descent a few cells ahead for continuous speed
        int cr = r, cc = c;
        for (int step = 0; step < 3; ++step) {
            int best = dist_[cr * width_ + cc];
            int br = cr, bc = cc;
            const int dr[4] = {1, -1, 0, 0}, dc[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const int nr = cr + dr[k], nc = cc + dc[k];
                if (nr < 0 || nr >= height_ || nc < 0 || nc >= width_) continue;
                const int nd = dist_[nr * width_ + nc];
                if (nd >= 0 && nd < best) {
                    best = nd;
                    br = nr;
                    bc = nc;
                }
            }
            cr = br;
            cc = bc;
            if (best == 0) break;
        }
        std::tie(tx, ty) = cell_center(cr, cc);
    }
    action[0] = static_cast<float>(std::clamp(kp_ * (tx - x) - kd_ * vx, -1.0, 1.0));
    action[1] = static_cast<float>(std::clamp(kp_ * (ty - y) - kd_ * vy, -1.0, 1.0));
}

void SuboptimalDriver::act(const envs::Env& env, const float*, Rng& rng, float* action) {
    const auto& car = dynamic_cast<const CarEnv&>(env);
    const auto pose = car.locate(car.x(), car.y());
    const auto [tx, ty] = car.waypoint(pose.segment + 3);
    const double desired = std::atan2(ty - car.y(), tx - car.x());
    const double err = envs::wrap_angle(desired - car.heading());
    const double steer = 2.5 * err + rng.normal(0.0, steer_noise_);
    const double throttle =
        (car.forward_speed() < speed_cap_ ? 0.2 : -1.0) + rng.normal(0.0, throttle_noise_);
    action[0] = static_cast<float>(std::clamp(steer, -1.0, 1.0));
    action[1] = static_cast<float>(std::clamp(throttle, -1.0, 1.0));
    action[2] = -1.0f;
}

TrainedPolicy::TrainedPolicy(const std::string& checkpoint_path) {
    io::BinReader r = io::BinReader::from_file(checkpoint_path);
    actor_.load(r);
}

void TrainedPolicy::act(const envs::Env&, const float* obs, Rng& rng, float* action) {
    auto s = actor_.sample_latent(obs, rng, true);
    for (size_t j = 0; j < s.z.size(); ++j) action[j] = s.z[j];
}

data::DemoDataset collect_demos(DemoPolicy& policy, envs::Env& env, int episodes, Rng& rng,
                                const std::string& env_id, const std::string& task_id) {
    if (episodes < 1) throw ContractError("collect_demos: episodes must be >= 1");
    data::DemoDataset ds;
    ds.env_id = env_id;
    ds.task_id = task_id;
    ds.state_dim = env.obs_dim();
    ds.action_dim = env.act_dim();

    double total_return = 0;
    int successes = 0;
    std::vector<float> action(env.act_dim());
    for (int ep = 0; ep < episodes; ++ep) {
        ds.episode_starts.push_back(ds.size());
        auto obs = env.reset(rng);
        policy.reset();
        while (true) {
            policy.act(env, obs.data(), rng, action.data());
            ds.push_pair(obs.data(), action.data());
            auto st = env.step(action.data());
            total_return += st.reward;
            obs = st.obs;
            if (st.terminated || st.truncated) {
                successes += st.success ? 1 : 0;
                break;
            }
        }
    }
    ds.episode_count = episodes;
    ds.success_rate = static_cast<float>(successes) / episodes;
    ds.mean_return = static_cast<float>(total_return / episodes);
    return ds;
}

} // namespace apc::demos
