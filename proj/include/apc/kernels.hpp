#pragma once

// Data-parallel inner loops used by the tensor engine. Every kernel comes in
// a serial reference version and an OpenMP version; the OpenMP versions
// assign each output element to exactly one thread and keep the per-element
// accumulation order identical to the serial code, so both produce bitwise
// identical results for any thread count. tools/bench_kernels compares them.

#include <cstddef>
#include <omp.h>

#include "apc/mat.hpp"

namespace apc::kern {

// Global switch (set_parallel) plus a work threshold: tiny problems are not
// worth a parallel region even when parallelism is on.
bool parallel_enabled();
void set_parallel(bool on);

inline constexpr long kParallelFlopThreshold = 64 * 1024;

// C(m x n) = A(m x k) @ B(k x n), or += when accumulate is set.
template <class R>
void gemm_serial(int m, int k, int n, const R* A, const R* B, R* C, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        R* Ci = C + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) Ci[j] = R(0);
        const R* Ai = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const R a = Ai[p];
            const R* Bp = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) Ci[j] += a * Bp[j];
        }
    }
}

template <class R>
void gemm_parallel(int m, int k, int n, const R* A, const R* B, R* C, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        R* Ci = C + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) Ci[j] = R(0);
        const R* Ai = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const R a = Ai[p];
            const R* Bp = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) Ci[j] += a * Bp[j];
        }
    }
}

template <class R>
void gemm(int m, int k, int n, const R* A, const R* B, R* C, bool accumulate) {
    const long flops = 2L * m * k * n;
    if (parallel_enabled() && flops >= kParallelFlopThreshold && m > 1)
        gemm_parallel(m, k, n, A, B, C, accumulate);
    else
        gemm_serial(m, k, n, A, B, C, accumulate);
}

template <class R>
void transpose(int rows, int cols, const R* A, R* At) {
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) At[static_cast<size_t>(j) * rows + i] = A[static_cast<size_t>(i) * cols + j];
}

// Convenience wrappers on Mat.

template <class R>
Mat<R> matmul(const Mat<R>& a, const Mat<R>& b) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    Mat<R> c(a.rows, b.cols);
    gemm(a.rows, a.cols, b.cols, a.ptr(), b.ptr(), c.ptr(), false);
    return c;
}

template <class R>
void matmul_acc(const Mat<R>& a, const Mat<R>& b, Mat<R>& c) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw DimensionError("matmul_acc: shape mismatch");
    gemm(a.rows, a.cols, b.cols, a.ptr(), b.ptr(), c.ptr(), true);
}

template <class R>
Mat<R> transposed(const Mat<R>& a) {
    Mat<R> t(a.cols, a.rows);
    transpose(a.rows, a.cols, a.ptr(), t.ptr());
    return t;
}

// Elementwise map; parallel variant keeps one owner thread per element.
template <class R, class F>
void map_serial(size_t n, const R* x, R* y, F f) {
    for (size_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class R, class F>
void map_parallel(size_t n, const R* x, R* y, F f) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) y[i] = f(x[i]);
}

template <class R, class F>
void map(size_t n, const R* x, R* y, F f) {
    if (parallel_enabled() && n >= 16384)
        map_parallel(n, x, y, f);
    else
        map_serial(n, x, y, f);
}

} // namespace apc::kern
