#pragma once

// CSV metric sinks plus the cross-seed aggregation pass. All numbers are
// printed with %.9g so identical runs produce byte-identical files.

#include <string>
#include <vector>

#include "apc/errors.hpp"

namespace apc::harness {

class CsvWriter {
public:
    CsvWriter() = default;
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;
    CsvWriter(CsvWriter&& o) noexcept : f_(o.f_), cols_(o.cols_) { o.f_ = nullptr; }

    void row(const std::vector<double>& values);
    void close();

private:
    std::FILE* f_ = nullptr;
    size_t cols_ = 0;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int col(const std::string& name) const;
    size_t row_count() const { return rows.size(); }
};

CsvTable read_csv(const std::string& path);

// Per-eval snapshot of one seed's run.
struct EvalPoint {
    long step = 0;
    double eval_return = 0;
    double running_success = 0;
};

// Aggregate rows: step, per-seed success columns, mean success, per-seed
// returns, mean return. All seed curves must share the eval grid.
void write_aggregate_csv(const std::string& path, const std::vector<uint64_t>& seeds,
                         const std::vector<std::vector<EvalPoint>>& curves);

// First step at which the cross-seed mean windowed success reaches 1.0 and
// stays at or above 0.95 for the following 10 evals; `budget` when never.
long time_to_success(const std::vector<long>& steps, const std::vector<double>& mean_success,
                     long budget);

} // namespace apc::harness
