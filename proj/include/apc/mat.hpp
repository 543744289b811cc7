#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "apc/errors.hpp"

namespace apc {

// Dense row-major 2-D array. Vectors are represented as 1 x n (row) or
// n x 1 (column) matrices; there is no separate vector type.
template <class R>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<R> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, R(0)) {}
    Mat(int r, int c, std::vector<R> data) : rows(r), cols(c), d(std::move(data)) {
        if (d.size() != static_cast<size_t>(r) * c)
            throw DimensionError("Mat: data size does not match shape");
    }

    static Mat zeros(int r, int c) { return Mat(r, c); }

    static Mat full(int r, int c, R v) {
        Mat m(r, c);
        for (auto& x : m.d) x = v;
        return m;
    }

    static Mat row(std::vector<R> v) {
        const int n = static_cast<int>(v.size());
        return Mat(1, n, std::move(v));
    }

    size_t size() const { return d.size(); }
    bool empty() const { return d.empty(); }

    R& operator()(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
    const R& operator()(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }

    R* ptr() { return d.data(); }
    const R* ptr() const { return d.data(); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (const R& x : d)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <class T>
    Mat<T> cast() const {
        Mat<T> out(rows, cols);
        for (size_t i = 0; i < d.size(); ++i) out.d[i] = static_cast<T>(d[i]);
        return out;
    }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

} // namespace apc
