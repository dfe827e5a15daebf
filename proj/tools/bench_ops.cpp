// Times the OpenMP kernels against the serial reference implementations and
// reports the max absolute deviation alongside the speedup.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "CLI11.hpp"
#include "hms/gradcheck.hpp"
#include "hms/network.hpp"
#include "hms/reference.hpp"
#include "hms/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace hms;
using Clock = std::chrono::steady_clock;

namespace {

double time_best_of(const std::function<void()>& fn, int iters) {
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = Clock::now();
        for (int i = 0; i < iters; ++i) fn();
        const auto t1 = Clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count() / iters);
    }
    return best;
}

double max_abs_diff(const Array3& a, const Array3& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
    return worst;
}

void row(const char* name, double serial_s, double parallel_s, double diff) {
    std::printf("%-16s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %.2e\n",
                name, serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s, diff);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel benchmark: serial reference vs parallel implementation"};
    int size = 128;
    int channels = 16;
    int iters = 5;
    int threads = 0;
    app.add_option("--size", size, "spatial size");
    app.add_option("--channels", channels, "channel count");
    app.add_option("--iters", iters, "iterations per timing");
    app.add_option("--threads", threads, "cap worker threads")->envname("HMS_THREADS");
    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
    std::printf("# OpenMP: %d thread(s)\n", omp_get_max_threads());
#else
    std::printf("# OpenMP: disabled at build time\n");
#endif
    std::printf("# size %dx%d, %d channels, best of 3 x %d iters\n", size, size, channels,
                iters);

    const MaskedMap p = random_masked_map(channels, size, size, 0.6, 1);
    const MaskedMap q = random_masked_map(channels, size, size, 0.6, 2);

    Rng rng(3);
    ConvKernel kern = ConvKernel::zeros(channels, channels, 2);
    for (real& w : kern.weights) w = real(rng.uniform(-1, 1));
    for (real& b : kern.bias) b = real(rng.uniform(-1, 1));
    AdaptiveKernel ak = AdaptiveKernel::zeros(channels, channels, channels);
    for (real& w : ak.k1) w = real(rng.uniform(-1, 1));
    for (real& w : ak.k2) w = real(rng.uniform(-1, 1));
    for (real& w : ak.k3) w = real(rng.uniform(-1, 1));

    {
        const Array3 a = si_conv_forward(p, kern).features;
        const Array3 b = ref::si_conv(p, kern).features;
        row("si_conv", time_best_of([&] { ref::si_conv(p, kern); }, iters),
            time_best_of([&] { si_conv_forward(p, kern); }, iters), max_abs_diff(a, b));
    }
    {
        const Array3 a = si_upsample_forward(p).features;
        const Array3 b = ref::si_upsample(p).features;
        row("si_upsample", time_best_of([&] { ref::si_upsample(p); }, iters),
            time_best_of([&] { si_upsample_forward(p); }, iters), max_abs_diff(a, b));
    }
    {
        const Array3 a = si_maxpool(p, 2).features;
        const Array3 b = ref::si_maxpool(p, 2).features;
        row("si_maxpool", time_best_of([&] { ref::si_maxpool(p, 2); }, iters),
            time_best_of([&] { si_maxpool(p, 2); }, iters), max_abs_diff(a, b));
    }
    {
        const Array3 a = si_average(p, q).features;
        const Array3 b = ref::si_average(p, q).features;
        row("si_average", time_best_of([&] { ref::si_average(p, q); }, iters),
            time_best_of([&] { si_average(p, q); }, iters), max_abs_diff(a, b));
    }
    {
        const Array3 a = si_concat_conv_forward(p, q, ak).features;
        const Array3 b = ref::si_concat_conv(p, q, ak).features;
        row("si_concat_conv", time_best_of([&] { ref::si_concat_conv(p, q, ak); }, iters),
            time_best_of([&] { si_concat_conv_forward(p, q, ak); }, iters), max_abs_diff(a, b));
    }

    // Network pass timing (no serial reference; backward included).
    if (size % 16 == 0) {
        const HmsNet net;
        ParamStore store;
        net.init_params(store, 7);
        const MaskedMap input = random_masked_map(1, size, size, 0.05, 11, 1.0, 80.0);
        const double fwd = time_best_of([&] { net.forward(input, store); }, iters);
        ForwardResult res = net.forward(input, store);
        Array3 d(1, size, size, real(1e-3));
        const double bwd = time_best_of(
            [&] {
                store.zero_grads();
                net.backward(res.tape, d, store);
            },
            iters);
        std::printf("%-16s forward %8.3f ms   backward %8.3f ms\n", "hmsnet", fwd * 1e3,
                    bwd * 1e3);
    }
    return 0;
}
