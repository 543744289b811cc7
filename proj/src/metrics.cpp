#include "apc/metrics.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace apc::harness {

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) {
    f_ = std::fopen(path.c_str(), "w");
    if (!f_) throw IoError("cannot open for writing: " + path);
    cols_ = header.size();
    for (size_t i = 0; i < header.size(); ++i)
        std::fprintf(f_, "%s%s", i ? "," : "", header[i].c_str());
    std::fprintf(f_, "\n");
}

CsvWriter::~CsvWriter() { close(); }

void CsvWriter::row(const std::vector<double>& values) {
    if (!f_) throw ContractError("CsvWriter: closed");
    if (values.size() != cols_) throw ContractError("CsvWriter: column count mismatch");
    // %.17g round-trips doubles exactly, so an independent pass over the
    // written files reproduces in-memory aggregates bit for bit
    for (size_t i = 0; i < values.size(); ++i)
        std::fprintf(f_, "%s%.17g", i ? "," : "", values[i]);
    std::fprintf(f_, "\n");
}

void CsvWriter::close() {
    if (f_) {
        std::fclose(f_);
        f_ = nullptr;
    }
}

int CsvTable::col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    throw IoError("csv column not found: " + name);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open csv: " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (first) {
            while (std::getline(ss, cell, ',')) t.header.push_back(cell);
            first = false;
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() != t.header.size()) throw IoError("ragged csv row in " + path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_aggregate_csv(const std::string& path, const std::vector<uint64_t>& seeds,
                         const std::vector<std::vector<EvalPoint>>& curves) {
    if (seeds.size() != curves.size()) throw ContractError("aggregate: seeds/curves mismatch");
    std::vector<std::string> header{"step"};
    for (auto s : seeds) header.push_back("success_seed" + std::to_string(s));
    header.push_back("mean_success");
    for (auto s : seeds) header.push_back("return_seed" + std::to_string(s));
    header.push_back("mean_return");

    size_t n_rows = curves.empty() ? 0 : curves[0].size();
    for (const auto& c : curves)
        if (c.size() != n_rows) throw ContractError("aggregate: seed curves differ in length");

    CsvWriter w(path, header);
    for (size_t i = 0; i < n_rows; ++i) {
        std::vector<double> row{static_cast<double>(curves[0][i].step)};
        double s_mean = 0;
        for (const auto& c : curves) {
            if (c[i].step != curves[0][i].step) throw ContractError("aggregate: eval grids differ");
            row.push_back(c[i].running_success);
            s_mean += c[i].running_success;
        }
        row.push_back(s_mean / curves.size());
        double r_mean = 0;
        for (const auto& c : curves) {
            row.push_back(c[i].eval_return);
            r_mean += c[i].eval_return;
        }
        row.push_back(r_mean / curves.size());
        w.row(row);
    }
}

long time_to_success(const std::vector<long>& steps, const std::vector<double>& mean_success,
                     long budget) {
    const size_t n = steps.size();
    for (size_t i = 0; i < n; ++i) {
        if (mean_success[i] < 1.0) continue;
        bool sustained = true;
        for (size_t k = i + 1; k < std::min(n, i + 11); ++k)
            sustained = sustained && mean_success[k] >= 0.95;
        if (sustained) return steps[i];
    }
    return budget;
}

} // namespace apc::harness
