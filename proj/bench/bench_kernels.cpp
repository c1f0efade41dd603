// Compares the OpenMP kernels against their serial reference
// implementations and prints a timing table. Not part of the test
// suite; results depend on the machine and thread count.

#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "oscar/hadamard.hpp"
#include "oscar/pipeline.hpp"
#include "oscar/quant.hpp"
#include "oscar/ref.hpp"
#include "oscar/tensor.hpp"

using namespace oscar;

namespace {

double time_ms(const std::function<void()> &fn, int reps) {
    // warm-up
    fn();
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char *name, double serial_ms, double parallel_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp: not enabled\n");
#endif
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    SeededRng rng(123);

    {
        Matrix a(256, 256), b(256, 256);
        for (double &x : a.data) x = rng.next_normal();
        for (double &x : b.data) x = rng.next_normal();
        const double s = time_ms([&] { ref::matmul(a, b); }, 5);
        const double p = time_ms([&] { matmul(a, b); }, 5);
        report("matmul 256x256x256", s, p);
    }
    {
        Tensor3 x(4096, 4, 128);
        for (double &v : x.data) v = rng.next_normal();
        const double s = time_ms([&] { ref::fht_tensor(x); }, 5);
        const double p = time_ms([&] { fht_tensor(x); }, 5);
        report("fht_tensor 4096x4x128", s, p);
    }
    {
        Matrix k(2048, 128);
        for (double &v : k.data) v = rng.next_normal();
        const double s = time_ms([&] { ref::group_quant_per_channel(k, 32, 2); }, 5);
        const double p = time_ms([&] { group_quant_per_channel(k, 32, 2); }, 5);
        report("group_quant_pc 2048x128", s, p);
        const double st = time_ms([&] { ref::group_quant_per_token(k, 32, 2); }, 5);
        const double pt = time_ms([&] { group_quant_per_token(k, 32, 2); }, 5);
        report("group_quant_pt 2048x128", st, pt);
    }
    {
        Tensor3 q(64, 4, 128), kv(1024, 4, 128);
        for (double &v : q.data) v = rng.next_normal();
        for (double &v : kv.data) v = rng.next_normal();
        const double s = time_ms([&] { ref::attention_naive(q, kv, kv); }, 3);
        const double p = time_ms([&] { attention(q, kv, kv); }, 3);
        report("attention 64q x 1024kv", s, p);
    }
    return 0;
}
