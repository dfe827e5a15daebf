#include "hms/si_ops.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hms {

namespace {

// Masked copy of the features: zero wherever the mask is zero. Select, not
// multiply, so non-finite garbage at invalid locations stays inert.
Array3 masked_features(const MaskedMap& p) {
    Array3 out(p.channels(), p.height(), p.width());
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < p.height(); ++u) {
            const real* f = p.features.row(c, u);
            const real* m = p.mask.row(u);
            real* dst = out.row(c, u);
            for (int v = 0; v < p.width(); ++v) dst[v] = (m[v] != real(0)) ? f[v] : real(0);
        }
    return out;
}

// dst[v] += sum_dj w[dj+k] * src[v+dj], with zero padding outside [0,W).
// One pass per (channel, row shift) keeps 2k+1 taps per source load.
void add_taps_row(real* __restrict dst, const real* __restrict src, const real* w, int W,
                  int k) {
    const auto edge = [&](int v) {
        real s = 0;
        for (int dj = -k; dj <= k; ++dj) {
            const int x = v + dj;
            if (x >= 0 && x < W) s += w[dj + k] * src[x];
        }
        dst[v] += s;
    };
    const int v0 = k, v1 = W - 1 - k;
    if (v1 < v0) {
        for (int v = 0; v < W; ++v) edge(v);
        return;
    }
    for (int v = 0; v < v0; ++v) edge(v);
    switch (k) {
        case 0:
            for (int v = v0; v <= v1; ++v) dst[v] += w[0] * src[v];
            break;
        case 1:
            for (int v = v0; v <= v1; ++v)
                dst[v] += w[0] * src[v - 1] + w[1] * src[v] + w[2] * src[v + 1];
            break;
        case 2:
            for (int v = v0; v <= v1; ++v)
                dst[v] += w[0] * src[v - 2] + w[1] * src[v - 1] + w[2] * src[v] +
                          w[3] * src[v + 1] + w[4] * src[v + 2];
            break;
        default:
            for (int v = v0; v <= v1; ++v) {
                real s = 0;
                for (int dj = -k; dj <= k; ++dj) s += w[dj + k] * src[v + dj];
                dst[v] += s;
            }
    }
    for (int v = v1 + 1; v < W; ++v) edge(v);
}

void check_dout(const Array3& d_out, int c, int h, int w, const char* op) {
    if (d_out.channels != c || d_out.height != h || d_out.width != w)
        throw DimensionError(std::string(op) + ": upstream gradient shape " + d_out.shape_str() +
                             " vs expected (" + std::to_string(c) + "," + std::to_string(h) +
                             "," + std::to_string(w) + ")");
}

}  // namespace

ConvKernel ConvKernel::zeros(int out_ch, int in_ch, int half_width) {
    ConvKernel k;
    k.out_channels = out_ch;
    k.in_channels = in_ch;
    k.half_width = half_width;
    const int K = 2 * half_width + 1;
    k.weights.assign(std::size_t(out_ch) * std::size_t(in_ch) * std::size_t(K) * std::size_t(K),
                     real(0));
    k.bias.assign(std::size_t(out_ch), real(0));
    return k;
}

AdaptiveKernel AdaptiveKernel::zeros(int out_ch, int c1, int c2) {
    AdaptiveKernel k;
    k.out_channels = out_ch;
    k.c1 = c1;
    k.c2 = c2;
    const std::size_t n = std::size_t(out_ch) * std::size_t(c1 + c2);
    k.k1.assign(n, real(0));
    k.k2.assign(n, real(0));
    k.k3.assign(n, real(0));
    k.bias.assign(std::size_t(out_ch), real(0));
    return k;
}

Mask2 window_valid_count(const Mask2& m, int half_width) {
    const int H = m.height, W = m.width, k = half_width;
    // Separable sliding sums: rows first, then columns.
    Mask2 rowsum(H, W);
    for (int u = 0; u < H; ++u) {
        const real* src = m.row(u);
        real* dst = rowsum.row(u);
        for (int v = 0; v < W; ++v) {
            real s = 0;
            const int lo = std::max(0, v - k), hi = std::min(W - 1, v + k);
            for (int j = lo; j <= hi; ++j) s += src[j];
            dst[v] = s;
        }
    }
    Mask2 count(H, W);
    for (int u = 0; u < H; ++u) {
        real* dst = count.row(u);
        const int lo = std::max(0, u - k), hi = std::min(H - 1, u + k);
        for (int v = 0; v < W; ++v) {
            real s = 0;
            for (int i = lo; i <= hi; ++i) s += rowsum.at(i, v);
            dst[v] = s;
        }
    }
    return count;
}

MaskedMap si_conv_forward(const MaskedMap& p, const ConvKernel& kern) {
    if (kern.in_channels != p.channels())
        throw DimensionError("si_conv: kernel expects " + std::to_string(kern.in_channels) +
                             " input channels, feature map has " + std::to_string(p.channels()));
    const int H = p.height(), W = p.width(), k = kern.half_width;
    const Array3 xm = masked_features(p);
    const Mask2 count = window_valid_count(p.mask, k);

    MaskedMap out;
    out.features = Array3(kern.out_channels, H, W);
    out.mask = Mask2(H, W);
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v) out.mask.at(u, v) = count.at(u, v) > real(0) ? real(1) : real(0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < kern.out_channels; ++co) {
        std::vector<real> acc(std::size_t(H) * std::size_t(W), real(0));
        const int K = kern.extent();
        for (int ci = 0; ci < kern.in_channels; ++ci)
            for (int di = -k; di <= k; ++di) {
                const int u_lo = std::max(0, -di), u_hi = std::min(H - 1, H - 1 - di);
                const real* wrow =
                    kern.weights.data() +
                    ((std::size_t(co) * std::size_t(kern.in_channels) + std::size_t(ci)) *
                         std::size_t(K) +
                     std::size_t(di + k)) *
                        std::size_t(K);
                for (int u = u_lo; u <= u_hi; ++u)
                    add_taps_row(acc.data() + std::size_t(u) * std::size_t(W),
                                 xm.row(ci, u + di), wrow, W, k);
            }
        const real b = kern.bias[std::size_t(co)];
        for (int u = 0; u < H; ++u) {
            const real* n = count.row(u);
            const real* a = acc.data() + std::size_t(u) * std::size_t(W);
            real* z = out.features.row(co, u);
            for (int v = 0; v < W; ++v)
                z[v] = n[v] > real(0) ? a[v] / (n[v] + kEps) + b : real(0);
        }
    }
    return out;
}

OpGrad si_conv_backward(const MaskedMap& p, const ConvKernel& kern, const Array3& d_out) {
    if (kern.in_channels != p.channels())
        throw DimensionError("si_conv_backward: kernel expects " +
                             std::to_string(kern.in_channels) + " input channels, map has " +
                             std::to_string(p.channels()));
    const int H = p.height(), W = p.width(), k = kern.half_width, K = kern.extent();
    check_dout(d_out, kern.out_channels, H, W, "si_conv_backward");

    const Array3 xm = masked_features(p);
    const Mask2 count = window_valid_count(p.mask, k);

    // Upstream gradient zeroed at invalid outputs, plus its normalized form.
    Array3 g0(kern.out_channels, H, W);
    Array3 g(kern.out_channels, H, W);
    for (int co = 0; co < kern.out_channels; ++co)
        for (int u = 0; u < H; ++u) {
            const real* d = d_out.row(co, u);
            const real* n = count.row(u);
            real* z0 = g0.row(co, u);
            real* zn = g.row(co, u);
            for (int v = 0; v < W; ++v) {
                const bool valid = n[v] > real(0);
                z0[v] = valid ? d[v] : real(0);
                zn[v] = valid ? d[v] / (n[v] + kEps) : real(0);
            }
        }

    OpGrad grad;
    grad.d_weights.assign(kern.weights.size(), real(0));
    grad.d_bias.assign(kern.bias.size(), real(0));
    grad.d_inputs.emplace_back(p.channels(), H, W);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < kern.out_channels; ++co) {
        real bsum = 0;
        for (int u = 0; u < H; ++u) {
            const real* z0 = g0.row(co, u);
            for (int v = 0; v < W; ++v) bsum += z0[v];
        }
        grad.d_bias[std::size_t(co)] = bsum;
        for (int ci = 0; ci < kern.in_channels; ++ci)
            for (int di = -k; di <= k; ++di) {
                const int u_lo = std::max(0, -di), u_hi = std::min(H - 1, H - 1 - di);
                for (int dj = -k; dj <= k; ++dj) {
                    const int v_lo = std::max(0, -dj), v_hi = std::min(W - 1, W - 1 - dj);
                    real s = 0;
                    for (int u = u_lo; u <= u_hi; ++u) {
                        const real* gn = g.row(co, u);
                        const real* src = xm.row(ci, u + di) + dj;
                        real rowsum = 0;
#ifdef _OPENMP
#pragma omp simd reduction(+ : rowsum)
#endif
                        for (int v = v_lo; v <= v_hi; ++v) rowsum += gn[v] * src[v];
                        s += rowsum;
                    }
                    grad.d_weights[((std::size_t(co) * std::size_t(kern.in_channels) +
                                     std::size_t(ci)) *
                                        std::size_t(K) +
                                    std::size_t(di + k)) *
                                       std::size_t(K) +
                                   std::size_t(dj + k)] = s;
                }
            }
    }

    Array3& dx = grad.d_inputs[0];
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int ci = 0; ci < p.channels(); ++ci) {
        std::vector<real> wrev(std::size_t(K), real(0));
        for (int co = 0; co < kern.out_channels; ++co)
            for (int di = -k; di <= k; ++di) {
                // dx(ci,u,v) collects g(co, u-di, v-dj) * w(co,ci,di,dj):
                // a correlation with the reversed weight row.
                for (int e = -k; e <= k; ++e) wrev[std::size_t(e + k)] = kern.w(co, ci, di + k, k - e);
                const int u_lo = std::max(0, di), u_hi = std::min(H - 1, H - 1 + di);
                for (int u = u_lo; u <= u_hi; ++u)
                    add_taps_row(dx.row(ci, u), g.row(co, u - di), wrev.data(), W, k);
            }
        for (int u = 0; u < H; ++u) {
            const real* m = p.mask.row(u);
            real* dst = dx.row(ci, u);
            for (int v = 0; v < W; ++v)
                if (m[v] == real(0)) dst[v] = real(0);
        }
    }
    return grad;
}

BilinearTaps bilinear_taps(int in_size) {
    BilinearTaps t;
    const int out_size = 2 * in_size;
    t.lo.resize(std::size_t(out_size));
    t.hi.resize(std::size_t(out_size));
    t.w_hi.resize(std::size_t(out_size));
    for (int i = 0; i < out_size; ++i) {
        const double s = (i + 0.5) / 2.0 - 0.5;
        const double f = std::floor(s);
        const int lo = int(f);
        const real frac = real(s - f);
        t.lo[std::size_t(i)] = std::clamp(lo, 0, in_size - 1);
        t.hi[std::size_t(i)] = std::clamp(lo + 1, 0, in_size - 1);
        t.w_hi[std::size_t(i)] = frac;
    }
    return t;
}

namespace {

// Applies the fixed 2x bilinear stencil to one H x W plane.
void bilinear_up_plane(const real* src, int H, int W, const BilinearTaps& tr,
                       const BilinearTaps& tc, real* dst) {
    const int OH = 2 * H, OW = 2 * W;
    for (int U = 0; U < OH; ++U) {
        const real* r0 = src + std::size_t(tr.lo[std::size_t(U)]) * std::size_t(W);
        const real* r1 = src + std::size_t(tr.hi[std::size_t(U)]) * std::size_t(W);
        const real wu1 = tr.w_hi[std::size_t(U)], wu0 = real(1) - wu1;
        real* out = dst + std::size_t(U) * std::size_t(OW);
        for (int V = 0; V < OW; ++V) {
            const int c0 = tc.lo[std::size_t(V)], c1 = tc.hi[std::size_t(V)];
            const real wv1 = tc.w_hi[std::size_t(V)], wv0 = real(1) - wv1;
            out[V] = wu0 * (wv0 * r0[c0] + wv1 * r0[c1]) + wu1 * (wv0 * r1[c0] + wv1 * r1[c1]);
        }
    }
}

}  // namespace

MaskedMap si_upsample_forward(const MaskedMap& p) {
    const int H = p.height(), W = p.width();
    const int OH = 2 * H, OW = 2 * W;
    const BilinearTaps tr = bilinear_taps(H), tc = bilinear_taps(W);
    const Array3 xm = masked_features(p);

    std::vector<real> fm(std::size_t(OH) * std::size_t(OW));
    bilinear_up_plane(p.mask.data.data(), H, W, tr, tc, fm.data());

    MaskedMap out;
    out.features = Array3(p.channels(), OH, OW);
    out.mask = Mask2(OH, OW);
    for (int U = 0; U < OH; ++U) {
        real* m = out.mask.row(U);
        const real* f = fm.data() + std::size_t(U) * std::size_t(OW);
        for (int V = 0; V < OW; ++V) m[V] = f[V] > kMaskNonzero ? real(1) : real(0);
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (p.channels() > 1)
#endif
    for (int c = 0; c < p.channels(); ++c) {
        std::vector<real> num(std::size_t(OH) * std::size_t(OW));
        bilinear_up_plane(xm.row(c, 0), H, W, tr, tc, num.data());
        for (int U = 0; U < OH; ++U) {
            const real* f = fm.data() + std::size_t(U) * std::size_t(OW);
            const real* n = num.data() + std::size_t(U) * std::size_t(OW);
            const real* m = out.mask.row(U);
            real* z = out.features.row(c, U);
            for (int V = 0; V < OW; ++V) z[V] = m[V] != real(0) ? n[V] / (f[V] + kEps) : real(0);
        }
    }
    return out;
}

OpGrad si_upsample_backward(const MaskedMap& p, const Array3& d_out) {
    const int H = p.height(), W = p.width();
    const int OH = 2 * H, OW = 2 * W;
    check_dout(d_out, p.channels(), OH, OW, "si_upsample_backward");
    const BilinearTaps tr = bilinear_taps(H), tc = bilinear_taps(W);

    std::vector<real> fm(std::size_t(OH) * std::size_t(OW));
    bilinear_up_plane(p.mask.data.data(), H, W, tr, tc, fm.data());

    OpGrad grad;
    grad.d_inputs.emplace_back(p.channels(), H, W);
    Array3& dx = grad.d_inputs[0];

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (p.channels() > 1)
#endif
    for (int c = 0; c < p.channels(); ++c) {
        for (int U = 0; U < OH; ++U) {
            const real wu1 = tr.w_hi[std::size_t(U)], wu0 = real(1) - wu1;
            const int r0 = tr.lo[std::size_t(U)], r1 = tr.hi[std::size_t(U)];
            const real* d = d_out.row(c, U);
            const real* f = fm.data() + std::size_t(U) * std::size_t(OW);
            for (int V = 0; V < OW; ++V) {
                if (f[V] <= kMaskNonzero) continue;  // invalid output, no flow
                const real gn = d[V] / (f[V] + kEps);
                const real wv1 = tc.w_hi[std::size_t(V)], wv0 = real(1) - wv1;
                const int c0 = tc.lo[std::size_t(V)], c1 = tc.hi[std::size_t(V)];
                dx.at(c, r0, c0) += wu0 * wv0 * gn;
                dx.at(c, r0, c1) += wu0 * wv1 * gn;
                dx.at(c, r1, c0) += wu1 * wv0 * gn;
                dx.at(c, r1, c1) += wu1 * wv1 * gn;
            }
        }
        for (int u = 0; u < H; ++u) {
            const real* m = p.mask.row(u);
            real* dst = dx.row(c, u);
            for (int v = 0; v < W; ++v)
                if (m[v] == real(0)) dst[v] = real(0);
        }
    }
    return grad;
}

MaskedMap si_maxpool(const MaskedMap& p, int window) {
    const int H = p.height(), W = p.width();
    if (window < 1) throw ConfigError("si_maxpool: window must be >= 1");
    if (H % window != 0 || W % window != 0)
        throw DimensionError("si_maxpool: spatial shape (" + std::to_string(H) + "," +
                             std::to_string(W) + ") not divisible by window " +
                             std::to_string(window));
    const int OH = H / window, OW = W / window;
    MaskedMap out;
    out.features = Array3(p.channels(), OH, OW);
    out.mask = Mask2(OH, OW);
    for (int wu = 0; wu < OH; ++wu)
        for (int wv = 0; wv < OW; ++wv) {
            real any = 0;
            for (int i = 0; i < window && any == real(0); ++i)
                for (int j = 0; j < window; ++j)
                    if (p.mask.at(wu * window + i, wv * window + j) != real(0)) {
                        any = 1;
                        break;
                    }
            out.mask.at(wu, wv) = any;
        }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (p.channels() > 1)
#endif
    for (int c = 0; c < p.channels(); ++c)
        for (int wu = 0; wu < OH; ++wu)
            for (int wv = 0; wv < OW; ++wv) {
                bool found = false;
                real best = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        const int u = wu * window + i, v = wv * window + j;
                        if (p.mask.at(u, v) == real(0)) continue;
                        const real val = p.features.at(c, u, v);
                        if (!found || val > best) {
                            best = val;
                            found = true;
                        }
                    }
                out.features.at(c, wu, wv) = found ? best : real(0);
            }
    return out;
}

OpGrad si_maxpool_backward(const MaskedMap& p, int window, const Array3& d_out) {
    const int H = p.height(), W = p.width();
    if (H % window != 0 || W % window != 0)
        throw DimensionError("si_maxpool_backward: spatial shape (" + std::to_string(H) + "," +
                             std::to_string(W) + ") not divisible by window " +
                             std::to_string(window));
    const int OH = H / window, OW = W / window;
    check_dout(d_out, p.channels(), OH, OW, "si_maxpool_backward");

    OpGrad grad;
    grad.d_inputs.emplace_back(p.channels(), H, W);
    Array3& dx = grad.d_inputs[0];
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (p.channels() > 1)
#endif
    for (int c = 0; c < p.channels(); ++c)
        for (int wu = 0; wu < OH; ++wu)
            for (int wv = 0; wv < OW; ++wv) {
                int bu = -1, bv = -1;
                real best = 0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        const int u = wu * window + i, v = wv * window + j;
                        if (p.mask.at(u, v) == real(0)) continue;
                        const real val = p.features.at(c, u, v);
                        if (bu < 0 || val > best) {
                            best = val;
                            bu = u;
                            bv = v;
                        }
                    }
                if (bu >= 0) dx.at(c, bu, bv) += d_out.at(c, wu, wv);
            }
    return grad;
}

MaskedMap si_average(const MaskedMap& p, const MaskedMap& q) {
    check_same_shape(p.features, q.features, "si_average");
    const int H = p.height(), W = p.width();
    MaskedMap out;
    out.features = Array3(p.channels(), H, W);
    out.mask = Mask2(H, W);
    for (int u = 0; u < H; ++u) {
        const real* mx = p.mask.row(u);
        const real* my = q.mask.row(u);
        real* mz = out.mask.row(u);
        for (int v = 0; v < W; ++v)
            mz[v] = (mx[v] != real(0) || my[v] != real(0)) ? real(1) : real(0);
    }
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < H; ++u) {
            const real* x = p.features.row(c, u);
            const real* y = q.features.row(c, u);
            const real* mx = p.mask.row(u);
            const real* my = q.mask.row(u);
            real* z = out.features.row(c, u);
            for (int v = 0; v < W; ++v) {
                const real den = mx[v] + my[v];
                if (den == real(0)) {
                    z[v] = 0;
                    continue;
                }
                const real num = (mx[v] != real(0) ? x[v] : real(0)) +
                                 (my[v] != real(0) ? y[v] : real(0));
                z[v] = num / (den + kEps);
            }
        }
    return out;
}

OpGrad si_average_backward(const MaskedMap& p, const MaskedMap& q, const Array3& d_out) {
    check_same_shape(p.features, q.features, "si_average_backward");
    check_dout(d_out, p.channels(), p.height(), p.width(), "si_average_backward");
    OpGrad grad;
    grad.d_inputs.emplace_back(p.channels(), p.height(), p.width());
    grad.d_inputs.emplace_back(p.channels(), p.height(), p.width());
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < p.height(); ++u) {
            const real* mx = p.mask.row(u);
            const real* my = q.mask.row(u);
            const real* d = d_out.row(c, u);
            real* dx = grad.d_inputs[0].row(c, u);
            real* dy = grad.d_inputs[1].row(c, u);
            for (int v = 0; v < p.width(); ++v) {
                const real den = mx[v] + my[v];
                if (den == real(0)) continue;
                const real g = d[v] / (den + kEps);
                if (mx[v] != real(0)) dx[v] = g;
                if (my[v] != real(0)) dy[v] = g;
            }
        }
    return grad;
}

namespace {

void check_concat_shapes(const MaskedMap& p, const MaskedMap& q, const AdaptiveKernel& ak,
                         const char* op) {
    if (p.height() != q.height() || p.width() != q.width())
        throw DimensionError(std::string(op) + ": spatial shape " + p.features.shape_str() +
                             " vs " + q.features.shape_str());
    if (ak.c1 != p.channels() || ak.c2 != q.channels())
        throw DimensionError(std::string(op) + ": adaptive kernel expects (" +
                             std::to_string(ak.c1) + "," + std::to_string(ak.c2) +
                             ") input channels, got (" + std::to_string(p.channels()) + "," +
                             std::to_string(q.channels()) + ")");
}

// Kernel set for a validity pattern; null when both masks are zero.
inline const std::vector<real>* select_kernel(const AdaptiveKernel& ak, bool mx, bool my) {
    if (mx && !my) return &ak.k1;
    if (!mx && my) return &ak.k2;
    if (mx && my) return &ak.k3;
    return nullptr;
}

}  // namespace

MaskedMap si_concat_conv_forward(const MaskedMap& p, const MaskedMap& q,
                                 const AdaptiveKernel& ak) {
    check_concat_shapes(p, q, ak, "si_concat_conv");
    const int H = p.height(), W = p.width();
    const int C1 = ak.c1, C2 = ak.c2, CT = C1 + C2;
    MaskedMap out;
    out.features = Array3(ak.out_channels, H, W);
    out.mask = Mask2(H, W);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (H > 16)
#endif
    for (int u = 0; u < H; ++u) {
        const real* mx = p.mask.row(u);
        const real* my = q.mask.row(u);
        for (int v = 0; v < W; ++v) {
            const bool bx = mx[v] != real(0), by = my[v] != real(0);
            const std::vector<real>* ks = select_kernel(ak, bx, by);
            if (!ks) continue;
            out.mask.at(u, v) = 1;
            for (int co = 0; co < ak.out_channels; ++co) {
                const real* krow = ks->data() + std::size_t(co) * std::size_t(CT);
                real acc = ak.bias[std::size_t(co)];
                if (bx)
                    for (int c = 0; c < C1; ++c) acc += krow[c] * p.features.at(c, u, v);
                if (by)
                    for (int c = 0; c < C2; ++c) acc += krow[C1 + c] * q.features.at(c, u, v);
                out.features.at(co, u, v) = acc;
            }
        }
    }
    return out;
}

OpGrad si_concat_conv_backward(const MaskedMap& p, const MaskedMap& q, const AdaptiveKernel& ak,
                               const Array3& d_out) {
    check_concat_shapes(p, q, ak, "si_concat_conv_backward");
    const int H = p.height(), W = p.width();
    const int C1 = ak.c1, C2 = ak.c2, CT = C1 + C2;
    check_dout(d_out, ak.out_channels, H, W, "si_concat_conv_backward");

    OpGrad grad;
    grad.d_inputs.emplace_back(C1, H, W);
    grad.d_inputs.emplace_back(C2, H, W);
    grad.d_k1.assign(ak.k1.size(), real(0));
    grad.d_k2.assign(ak.k2.size(), real(0));
    grad.d_k3.assign(ak.k3.size(), real(0));
    grad.d_bias.assign(ak.bias.size(), real(0));

    // Input gradients: each pixel flows only through its selected kernel set.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (H > 16)
#endif
    for (int u = 0; u < H; ++u) {
        const real* mx = p.mask.row(u);
        const real* my = q.mask.row(u);
        for (int v = 0; v < W; ++v) {
            const bool bx = mx[v] != real(0), by = my[v] != real(0);
            const std::vector<real>* ks = select_kernel(ak, bx, by);
            if (!ks) continue;
            for (int co = 0; co < ak.out_channels; ++co) {
                const real g = d_out.at(co, u, v);
                if (g == real(0)) continue;
                const real* krow = ks->data() + std::size_t(co) * std::size_t(CT);
                if (bx)
                    for (int c = 0; c < C1; ++c) grad.d_inputs[0].at(c, u, v) += g * krow[c];
                if (by)
                    for (int c = 0; c < C2; ++c) grad.d_inputs[1].at(c, u, v) += g * krow[C1 + c];
            }
        }
    }

    // Parameter gradients: one thread owns each output channel row.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (ak.out_channels > 1)
#endif
    for (int co = 0; co < ak.out_channels; ++co) {
        real bsum = 0;
        for (int u = 0; u < H; ++u) {
            const real* mx = p.mask.row(u);
            const real* my = q.mask.row(u);
            for (int v = 0; v < W; ++v) {
                const bool bx = mx[v] != real(0), by = my[v] != real(0);
                if (!bx && !by) continue;
                const real g = d_out.at(co, u, v);
                bsum += g;
                if (g == real(0)) continue;
                std::vector<real>& dk = bx && by ? grad.d_k3 : (bx ? grad.d_k1 : grad.d_k2);
                real* drow = dk.data() + std::size_t(co) * std::size_t(CT);
                if (bx)
                    for (int c = 0; c < C1; ++c) drow[c] += g * p.features.at(c, u, v);
                if (by)
                    for (int c = 0; c < C2; ++c) drow[C1 + c] += g * q.features.at(c, u, v);
            }
        }
        grad.d_bias[std::size_t(co)] = bsum;
    }
    return grad;
}

MaskedMap relu_masked(const MaskedMap& p) {
    MaskedMap out;
    out.features = Array3(p.channels(), p.height(), p.width());
    out.mask = p.mask;
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < p.height(); ++u) {
            const real* x = p.features.row(c, u);
            const real* m = p.mask.row(u);
            real* z = out.features.row(c, u);
            for (int v = 0; v < p.width(); ++v)
                z[v] = (m[v] != real(0) && x[v] > real(0)) ? x[v] : real(0);
        }
    return out;
}

OpGrad relu_masked_backward(const MaskedMap& p, const Array3& d_out) {
    check_dout(d_out, p.channels(), p.height(), p.width(), "relu_masked_backward");
    OpGrad grad;
    grad.d_inputs.emplace_back(p.channels(), p.height(), p.width());
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < p.height(); ++u) {
            const real* x = p.features.row(c, u);
            const real* m = p.mask.row(u);
            const real* d = d_out.row(c, u);
            real* g = grad.d_inputs[0].row(c, u);
            for (int v = 0; v < p.width(); ++v)
                g[v] = (m[v] != real(0) && x[v] > real(0)) ? d[v] : real(0);
        }
    return grad;
}

}  // namespace hms
