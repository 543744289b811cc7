#pragma once

// Structured-text experiment configuration: [section] tables of key = value
// pairs where values are integers, reals, booleans, quoted strings, or
// [a, b, c] lists. The grammar is documented in docs/config.md. Every SAC
// and flow hyperparameter defaults to the published table value; experiment
// files override per run.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apc/baselines.hpp"
#include "apc/envs.hpp"
#include "apc/flow.hpp"
#include "apc/policy.hpp"

namespace apc::harness {

struct Value {
    enum class Kind { number, boolean, string, list } kind = Kind::number;
    double num = 0;
    bool b = false;
    std::string str;
    std::vector<Value> list;
};

class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;

    double number(const std::string& section, const std::string& key) const;
    double number_or(const std::string& section, const std::string& key, double fallback) const;
    long integer(const std::string& section, const std::string& key) const;
    long integer_or(const std::string& section, const std::string& key, long fallback) const;
    bool boolean_or(const std::string& section, const std::string& key, bool fallback) const;
    std::string str(const std::string& section, const std::string& key) const;
    std::string str_or(const std::string& section, const std::string& key, std::string fallback) const;
    std::vector<double> num_list_or(const std::string& section, const std::string& key,
                                    std::vector<double> fallback) const;
    std::vector<std::string> str_list_or(const std::string& section, const std::string& key,
                                         std::vector<std::string> fallback) const;

    const std::map<std::string, std::map<std::string, Value>>& sections() const { return sections_; }

private:
    const Value* find(const std::string& section, const std::string& key) const;
    std::map<std::string, std::map<std::string, Value>> sections_;
    std::string origin_;
};

// ---- resolved experiment description ----

struct EnvConfig {
    std::string id = "maze"; // "maze" | "car"
    int task = 0;
    envs::MazeSpec::Reward reward = envs::MazeSpec::Reward::exp_neg_dist;
    int num_envs = 10;
    int max_steps = 200;
    std::vector<std::string> maze_rows; // empty: built-in plus maze
    std::string track;                  // "x,y; x,y; ..." override
    double track_width = 3.0;
    std::vector<double> obs_scale; // empty: per-env default
};

struct SacSection {
    float gamma = 0.99f;
    float tau = 0.01f;
    float alpha = 0.1f;
    int batch_size = 256;
    long learning_starts = 1000;
    long buffer_capacity = 1'000'000;
    float lr_policy = 3e-4f;
    float lr_q = 1e-3f;
    std::vector<int> hidden = {512, 256};
    long update_every = 0; // 0: once per vectorized step (num_envs transitions)
};

struct MethodConfig {
    baselines::Method method = baselines::Method::scratch_sac;
    std::vector<std::string> priors; // prior files, apc/parrot
    std::string dataset;             // demo file, il/qfilter
    double eta = 1.0;
    bool reward_sharing = true;
    ApcConfig::Selector selector = ApcConfig::Selector::arbitrator;
    double il_weight = 1.0;
};

struct ExperimentConfig {
    std::string name = "run";
    long total_steps = 150'000;
    long eval_every = 2'000;
    int eval_episodes = 10;
    int success_window = 50;
    std::vector<uint64_t> seeds = {1, 2, 3};
    EnvConfig env;
    MethodConfig method;
    SacSection sac;
    bool log_decisions = false;
};

ExperimentConfig experiment_from_config(const Config& c);
flow::FlowTrainConfig<double> flow_config_from(const Config& c);

// Canonical serialization of the semantic fields (everything except `name`)
// and its FNV-1a hash; identical settings hash identically regardless of the
// file they came from.
std::string canonical_string(const ExperimentConfig& c);
uint64_t config_hash(const ExperimentConfig& c);

// Env construction from the resolved config.
std::unique_ptr<envs::Env> make_env(const EnvConfig& e);
std::vector<double> default_obs_scale(const EnvConfig& e);

} // namespace apc::harness
