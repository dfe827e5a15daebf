#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "hms/array.hpp"
#include "hms/rng.hpp"

namespace hms::test {

inline Array3 array_1ch(const std::vector<std::vector<double>>& rows) {
    const int h = int(rows.size()), w = int(rows[0].size());
    Array3 a(1, h, w);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) a.at(0, u, v) = real(rows[std::size_t(u)][std::size_t(v)]);
    return a;
}

inline Mask2 mask_of(const std::vector<std::vector<double>>& rows) {
    const int h = int(rows.size()), w = int(rows[0].size());
    Mask2 m(h, w);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) m.at(u, v) = rows[std::size_t(u)][std::size_t(v)] != 0 ? 1 : 0;
    return m;
}

inline double max_abs_diff(const Array3& a, const Array3& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
    return worst;
}

inline bool bitwise_equal(const MaskedMap& a, const MaskedMap& b) {
    return a.features.data == b.features.data && a.mask.data == b.mask.data;
}

// Garbage (large finite values, NaN, Inf) at every invalid location.
inline MaskedMap with_garbage(const MaskedMap& p, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x74657374ULL));
    MaskedMap out = p;
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < p.height(); ++u)
            for (int v = 0; v < p.width(); ++v) {
                if (p.mask.at(u, v) != real(0)) continue;
                const double roll = rng.uniform();
                real g;
                if (roll < 0.1)
                    g = std::numeric_limits<real>::quiet_NaN();
                else if (roll < 0.2)
                    g = std::numeric_limits<real>::infinity();
                else
                    g = real(rng.uniform(-1e9, 1e9));
                out.features.at(c, u, v) = g;
            }
    return out;
}

}  // namespace hms::test
