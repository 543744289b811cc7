#include "apc/data.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "apc/serialize.hpp"

namespace apc::data {

namespace {
constexpr uint16_t kDatasetVersion = 1;
constexpr double kStdFloor = 1e-6;
} // namespace

DatasetStats dataset_stats(const DemoDataset& ds) {
    const size_t n = ds.size();
    if (n == 0) throw ContractError("dataset_stats: empty dataset");
    DatasetStats st;
    st.count = n;
    auto moments = [n](const std::vector<float>& flat, int dim, std::vector<double>& mean,
                       std::vector<double>& stdev) {
        mean.assign(dim, 0.0);
        stdev.assign(dim, 0.0);
        for (size_t i = 0; i < n; ++i)
            for (int d = 0; d < dim; ++d) mean[d] += flat[i * dim + d];
        for (int d = 0; d < dim; ++d) mean[d] /= static_cast<double>(n);
        for (size_t i = 0; i < n; ++i)
            for (int d = 0; d < dim; ++d) {
                const double diff = flat[i * dim + d] - mean[d];
                stdev[d] += diff * diff;
            }
        for (int d = 0; d < dim; ++d) stdev[d] = std::max(kStdFloor, std::sqrt(stdev[d] / static_cast<double>(n)));
    };
    moments(ds.states, ds.state_dim, st.state_mean, st.state_std);
    moments(ds.actions, ds.action_dim, st.action_mean, st.action_std);
    return st;
}

void save_dataset(const DemoDataset& ds, const std::string& path) {
    io::BinWriter w;
    w.magic("APCD");
    w.u16(kDatasetVersion);
    w.str(ds.env_id);
    w.str(ds.task_id);
    w.u32(static_cast<uint32_t>(ds.state_dim));
    w.u32(static_cast<uint32_t>(ds.action_dim));
    w.u64(ds.size());
    w.u32(ds.episode_count);
    w.f32(ds.success_rate);
    w.f32(ds.mean_return);
    w.u64(ds.episode_starts.size());
    for (uint64_t e : ds.episode_starts) w.u64(e);
    for (size_t i = 0; i < ds.size(); ++i) {
        w.f32_block(ds.state(i), ds.state_dim);
        w.f32_block(ds.action(i), ds.action_dim);
    }
    w.append_crc32();
    w.save(path);
}

DemoDataset load_dataset(const std::string& path) {
    io::BinReader r = io::BinReader::from_file(path);
    if (r.buffer().size() < 4 + 2 + 4) throw TruncatedError("dataset file too short: " + path);

    // checksum trailer covers everything before it
    const size_t body = r.buffer().size() - 4;
    uint32_t stored;
    std::memcpy(&stored, r.buffer().data() + body, 4);
    if (io::crc32(r.buffer().data(), body) != stored)
        throw ChecksumError("dataset checksum mismatch: " + path);

    r.expect_magic("APCD", "dataset");
    const uint16_t version = r.u16();
    if (version != kDatasetVersion)
        throw VersionError("unsupported dataset version " + std::to_string(version));

    DemoDataset ds;
    ds.env_id = r.str();
    ds.task_id = r.str();
    ds.state_dim = static_cast<int>(r.u32());
    ds.action_dim = static_cast<int>(r.u32());
    const uint64_t pairs = r.u64();
    ds.episode_count = r.u32();
    ds.success_rate = r.f32();
    ds.mean_return = r.f32();
    const uint64_t n_eps = r.u64();
    ds.episode_starts.resize(n_eps);
    for (auto& e : ds.episode_starts) e = r.u64();
    ds.states.resize(pairs * ds.state_dim);
    ds.actions.resize(pairs * ds.action_dim);
    for (uint64_t i = 0; i < pairs; ++i) {
        r.f32_block(ds.states.data() + i * ds.state_dim, ds.state_dim);
        r.f32_block(ds.actions.data() + i * ds.action_dim, ds.action_dim);
    }
    return ds;
}

void export_dataset_text(const DemoDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "# env=" << ds.env_id << " task=" << ds.task_id << " pairs=" << ds.size() << "\n";
    char num[64];
    for (size_t i = 0; i < ds.size(); ++i) {
        for (int d = 0; d < ds.state_dim; ++d) {
            std::snprintf(num, sizeof num, "%.9g", ds.state(i)[d]);
            f << (d ? " " : "") << num;
        }
        for (int d = 0; d < ds.action_dim; ++d) {
            std::snprintf(num, sizeof num, "%.9g", ds.action(i)[d]);
            f << " " << num;
        }
        f << "\n";
    }
}

} // namespace apc::data
