#include "hms/array.hpp"

#include <cmath>

namespace hms {

std::string Array3::shape_str() const {
    return "(" + std::to_string(channels) + "," + std::to_string(height) + "," +
           std::to_string(width) + ")";
}

bool Array3::all_finite() const {
    for (const real v : data)
        if (!std::isfinite(double(v))) return false;
    return true;
}

std::string Mask2::shape_str() const {
    return "(" + std::to_string(height) + "," + std::to_string(width) + ")";
}

bool Mask2::is_binary() const {
    for (const real v : data)
        if (v != real(0) && v != real(1)) return false;
    return true;
}

std::size_t Mask2::count_valid() const {
    std::size_t n = 0;
    for (const real v : data)
        if (v != real(0)) ++n;
    return n;
}

bool MaskedMap::is_canonical() const {
    if (features.height != mask.height || features.width != mask.width) return false;
    for (int c = 0; c < features.channels; ++c)
        for (int u = 0; u < features.height; ++u) {
            const real* f = features.row(c, u);
            const real* m = mask.row(u);
            for (int v = 0; v < features.width; ++v)
                if (m[v] == real(0) && f[v] != real(0)) return false;
        }
    return true;
}

MaskedMap canonicalize(const Array3& x, const Mask2& m) {
    if (x.height != m.height || x.width != m.width)
        throw DimensionError("canonicalize: feature shape " + x.shape_str() +
                             " incompatible with mask shape " + m.shape_str());
    MaskedMap out;
    out.features = Array3(x.channels, x.height, x.width);
    out.mask = m;
    for (int c = 0; c < x.channels; ++c)
        for (int u = 0; u < x.height; ++u) {
            const real* src = x.row(c, u);
            const real* mm = m.row(u);
            real* dst = out.features.row(c, u);
            for (int v = 0; v < x.width; ++v) dst[v] = (mm[v] != real(0)) ? src[v] : real(0);
        }
    return out;
}

void check_same_shape(const Array3& a, const Array3& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape " + a.shape_str() + " vs " +
                             b.shape_str());
}

Array3 elementwise_mul(const Array3& a, const Array3& b) {
    check_same_shape(a, b, "elementwise_mul");
    Array3 out(a.channels, a.height, a.width);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

Array3 elementwise_add(const Array3& a, const Array3& b) {
    check_same_shape(a, b, "elementwise_add");
    Array3 out(a.channels, a.height, a.width);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

Array3 elementwise_div_eps(const Array3& num, const Array3& den, real eps) {
    check_same_shape(num, den, "elementwise_div_eps");
    Array3 out(num.channels, num.height, num.width);
    for (std::size_t i = 0; i < num.size(); ++i) out.data[i] = num.data[i] / (den.data[i] + eps);
    return out;
}

}  // namespace hms
