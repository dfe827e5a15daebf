#include "hms/reference.hpp"

#include <algorithm>
#include <cmath>

namespace hms::ref {

MaskedMap si_conv(const MaskedMap& p, const ConvKernel& kern) {
    if (kern.in_channels != p.channels())
        throw DimensionError("ref::si_conv: kernel expects " + std::to_string(kern.in_channels) +
                             " input channels, map has " + std::to_string(p.channels()));
    const int H = p.height(), W = p.width(), k = kern.half_width;
    MaskedMap out;
    out.features = Array3(kern.out_channels, H, W);
    out.mask = Mask2(H, W);
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v) {
            real den = 0;
            for (int i = -k; i <= k; ++i)
                for (int j = -k; j <= k; ++j) {
                    const int uu = u + i, vv = v + j;
                    if (uu < 0 || uu >= H || vv < 0 || vv >= W) continue;
                    den += p.mask.at(uu, vv);
                }
            if (den == real(0)) continue;  // no valid neighbor: zero output, zero mask
            out.mask.at(u, v) = 1;
            for (int co = 0; co < kern.out_channels; ++co) {
                real num = 0;
                for (int i = -k; i <= k; ++i)
                    for (int j = -k; j <= k; ++j) {
                        const int uu = u + i, vv = v + j;
                        if (uu < 0 || uu >= H || vv < 0 || vv >= W) continue;
                        if (p.mask.at(uu, vv) == real(0)) continue;
                        for (int ci = 0; ci < kern.in_channels; ++ci)
                            num += kern.w(co, ci, i + k, j + k) * p.features.at(ci, uu, vv);
                    }
                out.features.at(co, u, v) = num / (den + kEps) + kern.bias[std::size_t(co)];
            }
        }
    return out;
}

namespace {

// The declared 2x stencil, evaluated directly: source coordinate
// (i+0.5)/2 - 0.5, two taps, clamp to edge.
void taps_1d(int i, int n, int& lo, int& hi, real& w_hi) {
    const double s = (i + 0.5) / 2.0 - 0.5;
    const double f = std::floor(s);
    lo = std::clamp(int(f), 0, n - 1);
    hi = std::clamp(int(f) + 1, 0, n - 1);
    w_hi = real(s - f);
}

}  // namespace

MaskedMap si_upsample(const MaskedMap& p) {
    const int H = p.height(), W = p.width();
    MaskedMap out;
    out.features = Array3(p.channels(), 2 * H, 2 * W);
    out.mask = Mask2(2 * H, 2 * W);
    for (int U = 0; U < 2 * H; ++U)
        for (int V = 0; V < 2 * W; ++V) {
            int r0, r1, c0, c1;
            real wr, wc;
            taps_1d(U, H, r0, r1, wr);
            taps_1d(V, W, c0, c1, wc);
            const int rows[2] = {r0, r1};
            const int cols[2] = {c0, c1};
            const real wrow[2] = {real(1) - wr, wr};
            const real wcol[2] = {real(1) - wc, wc};
            real fm = 0;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) fm += wrow[a] * wcol[b] * p.mask.at(rows[a], cols[b]);
            if (fm <= kMaskNonzero) continue;
            out.mask.at(U, V) = 1;
            for (int c = 0; c < p.channels(); ++c) {
                real num = 0;
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        num += wrow[a] * wcol[b] * p.mask.at(rows[a], cols[b]) *
                               p.features.at(c, rows[a], cols[b]);
                out.features.at(c, U, V) = num / (fm + kEps);
            }
        }
    return out;
}

MaskedMap si_maxpool(const MaskedMap& p, int window) {
    const int H = p.height(), W = p.width();
    if (H % window != 0 || W % window != 0)
        throw DimensionError("ref::si_maxpool: shape not divisible by window");
    MaskedMap out;
    out.features = Array3(p.channels(), H / window, W / window);
    out.mask = Mask2(H / window, W / window);
    for (int c = 0; c < p.channels(); ++c)
        for (int wu = 0; wu < H / window; ++wu)
            for (int wv = 0; wv < W / window; ++wv) {
                bool found = false;
                real best = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        const int u = wu * window + i, v = wv * window + j;
                        if (p.mask.at(u, v) == real(0)) continue;
                        if (!found || p.features.at(c, u, v) > best) {
                            best = p.features.at(c, u, v);
                            found = true;
                        }
                    }
                if (found) {
                    out.features.at(c, wu, wv) = best;
                    out.mask.at(wu, wv) = 1;
                }
            }
    return out;
}

MaskedMap si_average(const MaskedMap& p, const MaskedMap& q) {
    check_same_shape(p.features, q.features, "ref::si_average");
    MaskedMap out;
    out.features = Array3(p.channels(), p.height(), p.width());
    out.mask = Mask2(p.height(), p.width());
    for (int u = 0; u < p.height(); ++u)
        for (int v = 0; v < p.width(); ++v) {
            const real mx = p.mask.at(u, v), my = q.mask.at(u, v);
            if (mx == real(0) && my == real(0)) continue;
            out.mask.at(u, v) = 1;
            for (int c = 0; c < p.channels(); ++c) {
                const real num =
                    mx * p.features.at(c, u, v) + my * q.features.at(c, u, v);
                out.features.at(c, u, v) = num / (mx + my + kEps);
            }
        }
    return out;
}

MaskedMap si_concat_conv(const MaskedMap& p, const MaskedMap& q, const AdaptiveKernel& ak) {
    if (p.height() != q.height() || p.width() != q.width())
        throw DimensionError("ref::si_concat_conv: spatial shape mismatch");
    MaskedMap out;
    out.features = Array3(ak.out_channels, p.height(), p.width());
    out.mask = Mask2(p.height(), p.width());
    const int CT = ak.c1 + ak.c2;
    for (int u = 0; u < p.height(); ++u)
        for (int v = 0; v < p.width(); ++v) {
            const bool bx = p.mask.at(u, v) != real(0), by = q.mask.at(u, v) != real(0);
            if (!bx && !by) continue;
            const std::vector<real>& ks = bx && by ? ak.k3 : (bx ? ak.k1 : ak.k2);
            out.mask.at(u, v) = 1;
            for (int co = 0; co < ak.out_channels; ++co) {
                real acc = ak.bias[std::size_t(co)];
                for (int c = 0; c < ak.c1; ++c)
                    if (bx) acc += ks[std::size_t(co) * std::size_t(CT) + std::size_t(c)] *
                                   p.features.at(c, u, v);
                for (int c = 0; c < ak.c2; ++c)
                    if (by)
                        acc += ks[std::size_t(co) * std::size_t(CT) + std::size_t(ak.c1 + c)] *
                               q.features.at(c, u, v);
                out.features.at(co, u, v) = acc;
            }
        }
    return out;
}

Array3 dense_conv(const Array3& x, const ConvKernel& kern) {
    const int H = x.height, W = x.width, k = kern.half_width;
    Array3 out(kern.out_channels, H, W);
    for (int co = 0; co < kern.out_channels; ++co)
        for (int u = 0; u < H; ++u)
            for (int v = 0; v < W; ++v) {
                real acc = kern.bias[std::size_t(co)];
                for (int ci = 0; ci < kern.in_channels; ++ci)
                    for (int i = -k; i <= k; ++i)
                        for (int j = -k; j <= k; ++j) {
                            const int uu = u + i, vv = v + j;
                            if (uu < 0 || uu >= H || vv < 0 || vv >= W) continue;
                            acc += kern.w(co, ci, i + k, j + k) * x.at(ci, uu, vv);
                        }
                out.at(co, u, v) = acc;
            }
    return out;
}

Array3 dense_bilinear_upsample(const Array3& x) {
    const int H = x.height, W = x.width;
    Array3 out(x.channels, 2 * H, 2 * W);
    for (int U = 0; U < 2 * H; ++U)
        for (int V = 0; V < 2 * W; ++V) {
            int r0, r1, c0, c1;
            real wr, wc;
            taps_1d(U, H, r0, r1, wr);
            taps_1d(V, W, c0, c1, wc);
            for (int c = 0; c < x.channels; ++c)
                out.at(c, U, V) = (real(1) - wr) * ((real(1) - wc) * x.at(c, r0, c0) +
                                                    wc * x.at(c, r0, c1)) +
                                  wr * ((real(1) - wc) * x.at(c, r1, c0) + wc * x.at(c, r1, c1));
        }
    return out;
}

Array3 dense_average(const Array3& x, const Array3& y) {
    check_same_shape(x, y, "ref::dense_average");
    Array3 out(x.channels, x.height, x.width);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = (x.data[i] + y.data[i]) / real(2);
    return out;
}

Array3 dense_conv1x1(const Array3& x, const Array3& y, const std::vector<real>& k,
                     const std::vector<real>& bias, int out_ch) {
    const int CT = x.channels + y.channels;
    Array3 out(out_ch, x.height, x.width);
    for (int co = 0; co < out_ch; ++co)
        for (int u = 0; u < x.height; ++u)
            for (int v = 0; v < x.width; ++v) {
                real acc = bias[std::size_t(co)];
                for (int c = 0; c < x.channels; ++c)
                    acc += k[std::size_t(co) * std::size_t(CT) + std::size_t(c)] * x.at(c, u, v);
                for (int c = 0; c < y.channels; ++c)
                    acc += k[std::size_t(co) * std::size_t(CT) + std::size_t(x.channels + c)] *
                           y.at(c, u, v);
                out.at(co, u, v) = acc;
            }
    return out;
}

}  // namespace hms::ref
