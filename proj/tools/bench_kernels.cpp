// Times the OpenMP kernels against the serial reference across the matrix
// shapes the training loops actually use, and verifies bitwise agreement.

#include <chrono>
#include <cstdio>
#include <vector>

#include "apc/kernels.hpp"
#include "apc/rng.hpp"

using namespace apc;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

MatF random_mat(int r, int c, Rng& rng) {
    MatF m(r, c);
    for (auto& x : m.d) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return m;
}

struct Shape {
    int m, k, n;
};

} // namespace

int main() {
    Rng rng(1234);
    const std::vector<Shape> shapes = {
        {256, 4, 64},    {256, 64, 64},  {256, 64, 1},   {256, 16, 128},
        {256, 128, 128}, {256, 256, 256}, {256, 512, 256}, {1024, 17, 256},
    };

    std::printf("%-18s %12s %12s %10s %8s\n", "m x k x n", "serial GF/s", "omp GF/s", "speedup", "match");
    for (const auto& s : shapes) {
        MatF a = random_mat(s.m, s.k, rng);
        MatF b = random_mat(s.k, s.n, rng);
        MatF c1(s.m, s.n), c2(s.m, s.n);

        const double flops = 2.0 * s.m * s.k * s.n;
        const int reps = std::max(1, static_cast<int>(2e8 / flops));

        auto t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kern::gemm_serial(s.m, s.k, s.n, a.ptr(), b.ptr(), c1.ptr(), false);
        const double ser = seconds_since(t0) / reps;

        t0 = Clock::now();
        for (int r = 0; r < reps; ++r)
            kern::gemm_parallel(s.m, s.k, s.n, a.ptr(), b.ptr(), c2.ptr(), false);
        const double par = seconds_since(t0) / reps;

        bool match = true;
        for (size_t i = 0; i < c1.size(); ++i) match = match && c1.d[i] == c2.d[i];

        char label[32];
        std::snprintf(label, sizeof label, "%dx%dx%d", s.m, s.k, s.n);
        std::printf("%-18s %12.2f %12.2f %9.2fx %8s\n", label, flops / ser / 1e9, flops / par / 1e9,
                    ser / par, match ? "yes" : "NO");
    }
    return 0;
}
