#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hms/types.hpp"

namespace hms {

// Dense C x H x W array, row-major, channel-major.
struct Array3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<real> data;

    Array3() = default;
    Array3(int c, int h, int w, real fill = real(0))
        : channels(c), height(h), width(w),
          data(std::size_t(c) * std::size_t(h) * std::size_t(w), fill) {}

    std::size_t size() const { return data.size(); }

    real& at(int c, int u, int v) {
        return data[(std::size_t(c) * std::size_t(height) + std::size_t(u)) * std::size_t(width) +
                    std::size_t(v)];
    }
    real at(int c, int u, int v) const {
        return data[(std::size_t(c) * std::size_t(height) + std::size_t(u)) * std::size_t(width) +
                    std::size_t(v)];
    }

    real* row(int c, int u) {
        return data.data() + (std::size_t(c) * std::size_t(height) + std::size_t(u)) * std::size_t(width);
    }
    const real* row(int c, int u) const {
        return data.data() + (std::size_t(c) * std::size_t(height) + std::size_t(u)) * std::size_t(width);
    }

    bool same_shape(const Array3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    std::string shape_str() const;
    bool all_finite() const;
};

// Single-channel binary mask stored as real 0/1 so the arithmetic kernels
// can consume it directly.
struct Mask2 {
    int height = 0;
    int width = 0;
    std::vector<real> data;

    Mask2() = default;
    Mask2(int h, int w, real fill = real(0))
        : height(h), width(w), data(std::size_t(h) * std::size_t(w), fill) {}

    real& at(int u, int v) { return data[std::size_t(u) * std::size_t(width) + std::size_t(v)]; }
    real at(int u, int v) const {
        return data[std::size_t(u) * std::size_t(width) + std::size_t(v)];
    }
    real* row(int u) { return data.data() + std::size_t(u) * std::size_t(width); }
    const real* row(int u) const { return data.data() + std::size_t(u) * std::size_t(width); }

    std::string shape_str() const;
    bool is_binary() const;
    std::size_t count_valid() const;
};

// Feature map plus its sparsity mask. Canonical form: features are exactly
// zero wherever the mask is zero; every operator emits canonical output.
struct MaskedMap {
    Array3 features;
    Mask2 mask;

    int channels() const { return features.channels; }
    int height() const { return features.height; }
    int width() const { return features.width; }
    bool is_canonical() const;
};

// Builds the canonical pair, selecting features only where the mask is 1.
// Never multiplies by the mask, so non-finite garbage at invalid locations
// cannot leak through.
MaskedMap canonicalize(const Array3& x, const Mask2& m);

Array3 elementwise_mul(const Array3& a, const Array3& b);
Array3 elementwise_add(const Array3& a, const Array3& b);
Array3 elementwise_div_eps(const Array3& num, const Array3& den, real eps);

inline real div_eps(real num, real den, real eps) { return num / (den + eps); }

void check_same_shape(const Array3& a, const Array3& b, const char* op);

}  // namespace hms
