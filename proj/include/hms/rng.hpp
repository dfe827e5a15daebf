#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hms/types.hpp"

namespace hms {

// Seeded generator with hand-rolled distributions so that sequences are
// identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0,1) with 53 bits of mantissa.
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] via rejection-free Lemire-style scaling.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = std::uint64_t(hi - lo) + 1;
        return lo + std::int64_t(std::uint64_t(uniform() * double(span)) % span);
    }

    // Box-Muller; draws two uniforms per call.
    double normal(double mean, double stddev) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586477 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = std::size_t(uniform_int(0, std::int64_t(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), in selection order (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < n; ++i) pool[std::size_t(i)] = i;
        std::vector<int> out;
        out.reserve(std::size_t(k));
        for (int i = 0; i < k && i < n; ++i) {
            const std::size_t j = std::size_t(uniform_int(i, std::int64_t(n) - 1));
            std::swap(pool[std::size_t(i)], pool[j]);
            out.push_back(pool[std::size_t(i)]);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
};

// splitmix64 step, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace hms
