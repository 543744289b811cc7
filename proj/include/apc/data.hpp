#pragma once

// Demonstration datasets: flat (state, action) pairs consumed i.i.d. by
// prior training, with episode boundaries kept only as metadata.

#include <string>
#include <vector>

#include "apc/errors.hpp"
#include "apc/mat.hpp"

namespace apc::data {

struct DemoDataset {
    std::string env_id;
    std::string task_id;
    int state_dim = 0;
    int action_dim = 0;
    std::vector<float> states;  // pair i: states[i*state_dim ..]
    std::vector<float> actions; // pair i: actions[i*action_dim ..]
    std::vector<uint64_t> episode_starts; // informational only
    uint32_t episode_count = 0;
    float success_rate = 0.0f; // collection statistics
    float mean_return = 0.0f;

    size_t size() const { return state_dim == 0 ? 0 : states.size() / state_dim; }

    const float* state(size_t i) const { return states.data() + i * state_dim; }
    const float* action(size_t i) const { return actions.data() + i * action_dim; }

    void push_pair(const float* s, const float* a) {
        states.insert(states.end(), s, s + state_dim);
        actions.insert(actions.end(), a, a + action_dim);
    }
};

struct DatasetStats {
    std::vector<double> state_mean, state_std;
    std::vector<double> action_mean, action_std;
    size_t count = 0;
};

// Two-pass per-dimension moments (population std), std floored at 1e-6.
DatasetStats dataset_stats(const DemoDataset& ds);

// Versioned binary format "APCD" with a CRC32 trailer; see docs/formats.md.
void save_dataset(const DemoDataset& ds, const std::string& path);
DemoDataset load_dataset(const std::string& path);

// Lossless text table export, one pair per line.
void export_dataset_text(const DemoDataset& ds, const std::string& path);

} // namespace apc::data
