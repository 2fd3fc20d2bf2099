// Timing comparison of the OpenMP kernel drivers against the serial
// reference implementations. Run with VISTA_THREADS=<n> to pin the
// parallel side's thread count.

#include <chrono>
#include <cstdio>
#include <vector>

#include "vista/exec.hpp"
#include "vista/kernels.hpp"
#include "vista/rng.hpp"

using namespace vista;
using Clock = std::chrono::steady_clock;

namespace {

double seconds(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        f();
        auto t1 = Clock::now();
        best = std::min(best, seconds(t0, t1));
    }
    return best;
}

void fill(std::vector<float>& v, Rng& rng) {
    for (auto& x : v) x = static_cast<float>(rng.next_normal());
}

}  // namespace

int main() {
    const int reps = 5;
    std::printf("threads: %d\n", exec::threads());
    std::printf("%-22s %8s %12s %12s %8s\n", "kernel", "size", "serial_s", "parallel_s",
                "speedup");

    Rng rng(7, "bench");
    for (int m : {64, 256, 1024}) {
        const int k = 256, n = 256;
        std::vector<float> x(static_cast<size_t>(m) * k), w(static_cast<size_t>(k) * n),
            b(static_cast<size_t>(n)), y(static_cast<size_t>(m) * n);
        fill(x, rng);
        fill(w, rng);
        fill(b, rng);

        double ts = time_best_of(reps, [&] {
            kernels::serial::linear_forward(x.data(), w.data(), b.data(), y.data(), m, k, n);
        });
        double tp = time_best_of(reps, [&] {
            kernels::linear_forward(x.data(), w.data(), b.data(), y.data(), m, k, n);
        });
        std::printf("%-22s %8d %12.6f %12.6f %8.2f\n", "linear_forward", m, ts, tp, ts / tp);
    }

    for (int m : {256, 1024, 4096}) {
        const int d = 256;
        std::vector<float> x(static_cast<size_t>(m) * d), g(d), b(d),
            y(static_cast<size_t>(m) * d), mean(static_cast<size_t>(m)),
            rstd(static_cast<size_t>(m));
        fill(x, rng);
        fill(g, rng);
        fill(b, rng);

        double ts = time_best_of(reps, [&] {
            kernels::serial::layernorm_forward(x.data(), g.data(), b.data(), y.data(), mean.data(),
                                      rstd.data(), m, d);
        });
        double tp = time_best_of(reps, [&] {
            kernels::layernorm_forward(x.data(), g.data(), b.data(), y.data(), mean.data(),
                                       rstd.data(), m, d);
        });
        std::printf("%-22s %8d %12.6f %12.6f %8.2f\n", "layernorm_forward", m, ts, tp,
                    ts / tp);
    }

    for (int m : {256, 1024, 4096}) {
        const int d = 1024;
        std::vector<float> x(static_cast<size_t>(m) * d), y(x.size());
        fill(x, rng);
        double ts = time_best_of(reps, [&] { kernels::serial::gelu_forward(x.data(), y.data(), m * d); });
        double tp =
            time_best_of(reps, [&] { kernels::gelu_forward(x.data(), y.data(), m * d); });
        std::printf("%-22s %8d %12.6f %12.6f %8.2f\n", "gelu_forward", m, ts, tp, ts / tp);
    }

    for (int m : {64, 256, 1024}) {
        const int n = 256;
        std::vector<float> x(static_cast<size_t>(m) * n), y(x.size());
        fill(x, rng);
        double ts =
            time_best_of(reps, [&] { kernels::serial::softmax_rows(x.data(), y.data(), m, n); });
        double tp =
            time_best_of(reps, [&] { kernels::softmax_rows(x.data(), y.data(), m, n); });
        std::printf("%-22s %8d %12.6f %12.6f %8.2f\n", "softmax_rows", m, ts, tp, ts / tp);
    }
    return 0;
}
