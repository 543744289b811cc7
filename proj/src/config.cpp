#include "apc/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace apc::harness {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// value grammar: number | true | false | "string" | [v, v, ...]
Value parse_value(const std::string& raw, const std::string& where) {
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError(where + ": empty value");
    Value out;
    if (v == "true" || v == "false") {
        out.kind = Value::Kind::boolean;
        out.b = v == "true";
        return out;
    }
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw ConfigError(where + ": unterminated string");
        out.kind = Value::Kind::string;
        out.str = v.substr(1, v.size() - 2);
        return out;
    }
    if (v.front() == '[') {
        if (v.back() != ']') throw ConfigError(where + ": unterminated list");
        out.kind = Value::Kind::list;
        std::string inner = v.substr(1, v.size() - 2);
        // split on commas not inside quotes or nested brackets
        int depth = 0;
        bool in_str = false;
        std::string cur;
        auto flush = [&]() {
            const std::string t = trim(cur);
            if (!t.empty()) out.list.push_back(parse_value(t, where));
            cur.clear();
        };
        for (char c : inner) {
            if (c == '"') in_str = !in_str;
            if (!in_str) {
                if (c == '[') ++depth;
                if (c == ']') --depth;
                if (c == ',' && depth == 0) {
                    flush();
                    continue;
                }
            }
            cur.push_back(c);
        }
        flush();
        return out;
    }
    char* end = nullptr;
    out.num = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') throw ConfigError(where + ": cannot parse value '" + v + "'");
    out.kind = Value::Kind::number;
    return out;
}

} // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        // strip comments outside strings
        bool in_str = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_str = !in_str;
            if (line[i] == '#' && !in_str) {
                line = line.substr(0, i);
                break;
            }
        }
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty()) throw ConfigError(where + ": empty section name");
            c.sections_[section];
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError(where + ": empty key");
        c.sections_[section][key] = parse_value(t.substr(eq + 1), where);
    }
    return c;
}

const Value* Config::find(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    return &k->second;
}

bool Config::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

double Config::number(const std::string& section, const std::string& key) const {
    const Value* v = find(section, key);
    if (!v) throw ConfigError(origin_ + ": missing [" + section + "] " + key);
    if (v->kind != Value::Kind::number)
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be a number");
    return v->num;
}

double Config::number_or(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? number(section, key) : fallback;
}

long Config::integer(const std::string& section, const std::string& key) const {
    const double d = number(section, key);
    const long l = static_cast<long>(d);
    if (static_cast<double>(l) != d)
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be an integer");
    return l;
}

long Config::integer_or(const std::string& section, const std::string& key, long fallback) const {
    return has(section, key) ? integer(section, key) : fallback;
}

bool Config::boolean_or(const std::string& section, const std::string& key, bool fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (v->kind != Value::Kind::boolean)
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be true or false");
    return v->b;
}

std::string Config::str(const std::string& section, const std::string& key) const {
    const Value* v = find(section, key);
    if (!v) throw ConfigError(origin_ + ": missing [" + section + "] " + key);
    if (v->kind != Value::Kind::string)
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be a quoted string");
    return v->str;
}

std::string Config::str_or(const std::string& section, const std::string& key,
                           std::string fallback) const {
    return has(section, key) ? str(section, key) : std::move(fallback);
}

std::vector<double> Config::num_list_or(const std::string& section, const std::string& key,
                                        std::vector<double> fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (v->kind != Value::Kind::list)
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be a list");
    std::vector<double> out;
    for (const auto& e : v->list) {
        if (e.kind != Value::Kind::number)
            throw ConfigError(origin_ + ": [" + section + "] " + key + " must hold numbers");
        out.push_back(e.num);
    }
    return out;
}

std::vector<std::string> Config::str_list_or(const std::string& section, const std::string& key,
                                             std::vector<std::string> fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (v->kind != Value::Kind::list)
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be a list");
    std::vector<std::string> out;
    for (const auto& e : v->list) {
        if (e.kind != Value::Kind::string)
            throw ConfigError(origin_ + ": [" + section + "] " + key + " must hold strings");
        out.push_back(e.str);
    }
    return out;
}

// ---- resolution ----

ExperimentConfig experiment_from_config(const Config& c) {
    ExperimentConfig e;
    e.name = c.str_or("experiment", "name", "run");
    e.total_steps = c.integer_or("experiment", "total_steps", 150'000);
    if (e.total_steps < 0) throw ConfigError("total_steps must be >= 0");
    e.eval_every = c.integer_or("experiment", "eval_every", 2'000);
    if (e.eval_every <= 0) throw ConfigError("eval_every must be > 0");
    e.eval_episodes = static_cast<int>(c.integer_or("experiment", "eval_episodes", 10));
    e.success_window = static_cast<int>(c.integer_or("experiment", "success_window", 50));
    e.seeds.clear();
    for (double s : c.num_list_or("experiment", "seeds", {1, 2, 3}))
        e.seeds.push_back(static_cast<uint64_t>(s));
    if (e.seeds.empty()) throw ConfigError("seeds must be nonempty");
    e.log_decisions = c.boolean_or("experiment", "log_decisions", false);

    e.env.id = c.str_or("env", "id", "maze");
    if (e.env.id != "maze" && e.env.id != "car") throw ConfigError("env id must be maze or car");
    e.env.task = static_cast<int>(c.integer_or("env", "task", 0));
    const std::string rew = c.str_or("env", "reward", "exp_neg_dist");
    if (rew == "exp_neg_dist")
        e.env.reward = envs::MazeSpec::Reward::exp_neg_dist;
    else if (rew == "neg_dist")
        e.env.reward = envs::MazeSpec::Reward::neg_dist;
    else
        throw ConfigError("env reward must be exp_neg_dist or neg_dist");
    e.env.num_envs = static_cast<int>(c.integer_or("env", "num_envs", e.env.id == "maze" ? 10 : 1));
    if (e.env.num_envs < 1) throw ConfigError("num_envs must be >= 1");
    e.env.max_steps = static_cast<int>(c.integer_or("env", "max_steps", e.env.id == "maze" ? 200 : 300));
    e.env.maze_rows = c.str_list_or("env", "rows", {});
    e.env.track = c.str_or("env", "track", "");
    e.env.track_width = c.number_or("env", "track_width", 3.0);
    e.env.obs_scale = c.num_list_or("env", "obs_scale", {});

    e.method.method = baselines::method_from_name(c.str_or("method", "name", "sac"));
    e.method.priors = c.str_list_or("method", "priors", {});
    e.method.dataset = c.str_or("method", "dataset", "");
    e.method.eta = c.number_or("method", "eta", 1.0);
    e.method.reward_sharing = c.boolean_or("method", "reward_sharing", true);
    const std::string sel = c.str_or("method", "selector", "arbitrator");
    if (sel == "arbitrator")
        e.method.selector = ApcConfig::Selector::arbitrator;
    else if (sel == "learned")
        e.method.selector = ApcConfig::Selector::learned;
    else
        throw ConfigError("selector must be arbitrator or learned");
    e.method.il_weight = c.number_or("method", "il_weight", 1.0);

    using baselines::Method;
    const bool needs_prior = e.method.method == Method::parrot || e.method.method == Method::apc;
    const bool needs_dataset = e.method.method == Method::il || e.method.method == Method::qfilter;
    if (needs_prior && e.method.priors.empty())
        throw ConfigError(std::string(baselines::method_name(e.method.method)) + " requires priors");
    if (e.method.method == Method::parrot && e.method.priors.size() != 1)
        throw ConfigError("parrot takes exactly one prior");
    if (needs_dataset && e.method.dataset.empty())
        throw ConfigError(std::string(baselines::method_name(e.method.method)) + " requires a dataset");
    if (e.method.method == Method::scratch_sac && (!e.method.priors.empty() || !e.method.dataset.empty()))
        throw ConfigError("sac takes neither priors nor a dataset");

    e.sac.gamma = static_cast<float>(c.number_or("sac", "gamma", 0.99));
    e.sac.tau = static_cast<float>(c.number_or("sac", "tau", 0.01));
    e.sac.alpha = static_cast<float>(c.number_or("sac", "alpha", 0.1));
    e.sac.batch_size = static_cast<int>(c.integer_or("sac", "batch_size", 256));
    e.sac.learning_starts = c.integer_or("sac", "learning_starts", 1'000);
    e.sac.buffer_capacity = c.integer_or("sac", "buffer_capacity", 1'000'000);
    e.sac.lr_policy = static_cast<float>(c.number_or("sac", "lr_policy", 3e-4));
    e.sac.lr_q = static_cast<float>(c.number_or("sac", "lr_q", 1e-3));
    e.sac.hidden.clear();
    for (double h : c.num_list_or("sac", "hidden", {512, 256}))
        e.sac.hidden.push_back(static_cast<int>(h));
    e.sac.update_every = c.integer_or("sac", "update_every", 0);
    return e;
}

flow::FlowTrainConfig<double> flow_config_from(const Config& c) {
    flow::FlowTrainConfig<double> f;
    f.lr = c.number_or("flow", "lr", 1e-4);
    f.batch_size = static_cast<int>(c.integer_or("flow", "batch_size", 64));
    f.epochs = static_cast<int>(c.integer_or("flow", "epochs", 100));
    f.grad_clip_norm = c.number_or("flow", "grad_clip", 1.0);
    f.lambda_ic = c.number_or("flow", "lambda_ic", 1e-3);
    f.lambda_fs = c.number_or("flow", "lambda_fs", 1e-3);
    f.noise_std = c.number_or("flow", "noise_std", 0.01);
    f.eps_stab = c.number_or("flow", "eps_stab", 1e-6);
    f.base_var = c.number_or("flow", "base_cov", 0.2);
    f.coupling_layers = static_cast<int>(c.integer_or("flow", "coupling_layers", 10));
    f.hidden.clear();
    for (double h : c.num_list_or("flow", "hidden", {256}))
        f.hidden.push_back(static_cast<int>(h));
    f.holdout_frac = c.number_or("flow", "holdout", 0.1);
    return f;
}

std::string canonical_string(const ExperimentConfig& c) {
    char buf[128];
    std::string out;
    auto kv = [&out, &buf](const char* k, auto v) {
        if constexpr (std::is_floating_point_v<decltype(v)>) {
            std::snprintf(buf, sizeof buf, "%s=%.17g\n", k, static_cast<double>(v));
        } else {
            std::snprintf(buf, sizeof buf, "%s=%lld\n", k, static_cast<long long>(v));
        }
        out += buf;
    };
    auto ks = [&out](const char* k, const std::string& v) { out += std::string(k) + "=" + v + "\n"; };

    kv("total_steps", c.total_steps);
    kv("eval_every", c.eval_every);
    kv("eval_episodes", c.eval_episodes);
    kv("success_window", c.success_window);
    out += "seeds=";
    for (auto s : c.seeds) out += std::to_string(s) + ",";
    out += "\n";
    ks("env.id", c.env.id);
    kv("env.task", c.env.task);
    kv("env.reward", static_cast<int>(c.env.reward));
    kv("env.num_envs", c.env.num_envs);
    kv("env.max_steps", c.env.max_steps);
    out += "env.rows=";
    for (const auto& r : c.env.maze_rows) out += r + "|";
    out += "\n";
    ks("env.track", c.env.track);
    kv("env.track_width", c.env.track_width);
    out += "env.obs_scale=";
    for (double v : c.env.obs_scale) out += std::to_string(v) + ",";
    out += "\n";
    ks("method", baselines::method_name(c.method.method));
    out += "priors=";
    for (const auto& p : c.method.priors) out += p + "|";
    out += "\n";
    ks("dataset", c.method.dataset);
    kv("eta", c.method.eta);
    kv("reward_sharing", c.method.reward_sharing ? 1 : 0);
    kv("selector", static_cast<int>(c.method.selector));
    kv("il_weight", c.method.il_weight);
    kv("gamma", c.sac.gamma);
    kv("tau", c.sac.tau);
    kv("alpha", c.sac.alpha);
    kv("batch_size", c.sac.batch_size);
    kv("learning_starts", c.sac.learning_starts);
    kv("buffer_capacity", c.sac.buffer_capacity);
    kv("lr_policy", c.sac.lr_policy);
    kv("lr_q", c.sac.lr_q);
    out += "hidden=";
    for (int h : c.sac.hidden) out += std::to_string(h) + ",";
    out += "\n";
    kv("update_every", c.sac.update_every);
    return out;
}

uint64_t config_hash(const ExperimentConfig& c) {
    const std::string s = canonical_string(c);
    uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::unique_ptr<envs::Env> make_env(const EnvConfig& e) {
    if (e.id == "maze") {
        envs::MazeSpec spec = envs::MazeSpec::artery_maze();
        if (!e.maze_rows.empty()) spec.rows = e.maze_rows;
        spec.goal_index = e.task;
        spec.max_steps = e.max_steps;
        spec.reward = e.reward;
        return std::make_unique<envs::MazeEnv>(spec);
    }
    envs::CarSpec spec = envs::CarSpec::default_track();
    if (!e.track.empty()) {
        spec.centerline.clear();
        // "x,y; x,y; ..." list of centerline points
        std::istringstream in(e.track);
        std::string pt;
        while (std::getline(in, pt, ';')) {
            const size_t comma = pt.find(',');
            if (comma == std::string::npos) throw ConfigError("track: expected 'x,y' pairs");
            spec.centerline.emplace_back(std::stod(pt.substr(0, comma)), std::stod(pt.substr(comma + 1)));
        }
        spec.half_width = e.track_width;
    }
    spec.max_steps = e.max_steps;
    return std::make_unique<envs::CarEnv>(spec);
}

std::vector<double> default_obs_scale(const EnvConfig& e) {
    if (!e.obs_scale.empty()) return e.obs_scale;
    if (e.id == "maze") return std::vector<double>(4, 0.25);
    // car: distances ~6, angle ~pi, speeds ~20, waypoints ~10
    std::vector<double> s = {0.25, 0.25, 0.5, 0.1, 0.25, 0.5};
    for (int j = 0; j < 5; ++j) {
        s.push_back(0.1);
        s.push_back(0.1);
    }
    return s;
}

} // namespace apc::harness
