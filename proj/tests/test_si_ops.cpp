#include <cmath>

#include "doctest.h"
#include "hms/gradcheck.hpp"
#include "hms/reference.hpp"
#include "hms/si_ops.hpp"
#include "test_util.hpp"

using namespace hms;
using namespace hms::test;

namespace {

ConvKernel ones_kernel(int half_width, real bias = 0) {
    ConvKernel k = ConvKernel::zeros(1, 1, half_width);
    for (real& w : k.weights) w = 1;
    k.bias[0] = bias;
    return k;
}

ConvKernel random_kernel(int co, int ci, int k, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xabcdULL));
    ConvKernel kern = ConvKernel::zeros(co, ci, k);
    for (real& w : kern.weights) w = real(rng.uniform(-1, 1));
    for (real& b : kern.bias) b = real(rng.uniform(-0.5, 0.5));
    return kern;
}

AdaptiveKernel random_adaptive(int co, int c1, int c2, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xbeefULL));
    AdaptiveKernel ak = AdaptiveKernel::zeros(co, c1, c2);
    for (real& w : ak.k1) w = real(rng.uniform(-1, 1));
    for (real& w : ak.k2) w = real(rng.uniform(-1, 1));
    for (real& w : ak.k3) w = real(rng.uniform(-1, 1));
    for (real& b : ak.bias) b = real(rng.uniform(-0.5, 0.5));
    return ak;
}

}  // namespace

TEST_CASE("si_conv: single valid pixel normalizes to its own value") {
    Array3 x(1, 3, 3);
    Mask2 m(3, 3);
    x.at(0, 1, 1) = 4;
    m.at(1, 1) = 1;
    const MaskedMap z = si_conv_forward(canonicalize(x, m), ones_kernel(1));
    for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v) CHECK(z.mask.at(u, v) == real(1));
    CHECK(std::abs(double(z.features.at(0, 1, 1)) - 4.0) < 1e-7);
}

TEST_CASE("si_conv: dense constant input gives c + b in the interior") {
    Array3 x(1, 7, 7, real(3));
    Mask2 m(7, 7, real(1));
    const MaskedMap z = si_conv_forward(canonicalize(x, m), ones_kernel(1, real(0.25)));
    for (int u = 1; u < 6; ++u)
        for (int v = 1; v < 6; ++v)
            CHECK(std::abs(double(z.features.at(0, u, v)) - 3.25) < 1e-7);
}

TEST_CASE("si_conv matches the naive per-pixel oracle") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const MaskedMap p = random_masked_map(1, 6, 6, 0.5, s);
        const ConvKernel kern = random_kernel(2, 1, 1, s);
        CHECK(max_abs_diff(si_conv_forward(p, kern).features, ref::si_conv(p, kern).features) <
              1e-10);
    }
}

TEST_CASE("si_conv rejects channel mismatch") {
    const MaskedMap p = random_masked_map(2, 4, 4, 0.5, 1);
    CHECK_THROWS_AS(si_conv_forward(p, ones_kernel(1)), DimensionError);
}

TEST_CASE("si_conv backward: zero upstream gives zero gradients") {
    const MaskedMap p = random_masked_map(2, 5, 5, 0.6, 3);
    const ConvKernel kern = random_kernel(2, 2, 1, 3);
    const OpGrad g = si_conv_backward(p, kern, Array3(2, 5, 5));
    for (const real v : g.d_weights) CHECK(v == real(0));
    for (const real v : g.d_bias) CHECK(v == real(0));
    for (const real v : g.d_inputs[0].data) CHECK(v == real(0));
}

TEST_CASE("si_conv backward: 1x1 kernel chain rule on a single term") {
    Array3 x(1, 1, 1);
    Mask2 m(1, 1, real(1));
    x.at(0, 0, 0) = 4;
    ConvKernel kern = ConvKernel::zeros(1, 1, 0);
    kern.weights[0] = real(0.5);
    Array3 d(1, 1, 1, real(1));
    const OpGrad g = si_conv_backward(canonicalize(x, m), kern, d);
    CHECK(std::abs(double(g.d_weights[0]) - 4.0) < 1e-7);
    CHECK(std::abs(double(g.d_inputs[0].at(0, 0, 0)) - 0.5) < 1e-7);
    CHECK(g.d_bias[0] == real(1));
}

TEST_CASE("si_conv backward matches finite differences") {
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(gradcheck_si_conv(s).pass(1e-4));
}

TEST_CASE("si_upsample: constant 1x1 map spreads to 2x2") {
    Array3 x(1, 1, 1);
    Mask2 m(1, 1, real(1));
    x.at(0, 0, 0) = real(6.5);
    const MaskedMap z = si_upsample_forward(canonicalize(x, m));
    CHECK(z.height() == 2);
    CHECK(z.width() == 2);
    for (int u = 0; u < 2; ++u)
        for (int v = 0; v < 2; ++v) {
            CHECK(z.mask.at(u, v) == real(1));
            CHECK(std::abs(double(z.features.at(0, u, v)) - 6.5) < 1e-7);
        }
}

TEST_CASE("si_upsample: all-invalid input annihilates") {
    const MaskedMap z = si_upsample_forward(canonicalize(Array3(2, 3, 3), Mask2(3, 3)));
    CHECK(z.mask.count_valid() == 0);
    for (const real v : z.features.data) CHECK(v == real(0));
}

TEST_CASE("si_upsample matches the direct stencil oracle") {
    Array3 x(1, 2, 2);
    Mask2 m(2, 2);
    x.at(0, 0, 1) = 8;
    m.at(0, 1) = 1;
    const MaskedMap p = canonicalize(x, m);
    CHECK(max_abs_diff(si_upsample_forward(p).features, ref::si_upsample(p).features) < 1e-10);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const MaskedMap r = random_masked_map(3, 5, 4, 0.5, s);
        CHECK(max_abs_diff(si_upsample_forward(r).features, ref::si_upsample(r).features) <
              1e-10);
        CHECK(si_upsample_forward(r).mask.data == ref::si_upsample(r).mask.data);
    }
}

TEST_CASE("si_upsample backward: constant stencil sums to ~4") {
    Array3 x(1, 1, 1);
    Mask2 m(1, 1, real(1));
    x.at(0, 0, 0) = 1;
    const OpGrad g = si_upsample_backward(canonicalize(x, m), Array3(1, 2, 2, real(1)));
    CHECK(std::abs(double(g.d_inputs[0].at(0, 0, 0)) - 4.0) < 1e-6);
    const OpGrad zero = si_upsample_backward(canonicalize(x, m), Array3(1, 2, 2));
    CHECK(zero.d_inputs[0].at(0, 0, 0) == real(0));
}

TEST_CASE("si_upsample backward matches finite differences") {
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(gradcheck_si_upsample(s).pass(1e-4));
}

TEST_CASE("si_maxpool: invalid entries never win") {
    const Array3 x = array_1ch({{1, -5}, {9, 9}});
    const Mask2 m = mask_of({{1, 1}, {0, 0}});
    const MaskedMap z = si_maxpool(canonicalize(x, m), 2);
    CHECK(z.features.at(0, 0, 0) == real(1));
    CHECK(z.mask.at(0, 0) == real(1));
}

TEST_CASE("si_maxpool: all-invalid window emits zero") {
    const MaskedMap z = si_maxpool(canonicalize(Array3(1, 2, 2, real(7)), Mask2(2, 2)), 2);
    CHECK(z.features.at(0, 0, 0) == real(0));
    CHECK(z.mask.at(0, 0) == real(0));
}

TEST_CASE("si_maxpool matches the naive oracle; odd shapes rejected") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const MaskedMap p = random_masked_map(2, 4, 4, 0.5, s);
        CHECK(max_abs_diff(si_maxpool(p, 2).features, ref::si_maxpool(p, 2).features) < 1e-10);
    }
    CHECK_THROWS_AS(si_maxpool(random_masked_map(1, 3, 4, 0.5, 1), 2), DimensionError);
}

TEST_CASE("si_maxpool backward: routing and row-major tie break") {
    Array3 x = array_1ch({{2, 2}, {0, 1}});
    Mask2 m = mask_of({{1, 1}, {1, 1}});
    const OpGrad g = si_maxpool_backward(canonicalize(x, m), 2, Array3(1, 1, 1, real(3)));
    CHECK(g.d_inputs[0].at(0, 0, 0) == real(3));  // first of the tied maxima
    CHECK(g.d_inputs[0].at(0, 0, 1) == real(0));
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(gradcheck_si_maxpool(s).pass(1e-4));
}

TEST_CASE("si_average: mean, copy-through, and annihilation") {
    const Array3 x = array_1ch({{2}});
    const Array3 y = array_1ch({{4}});
    const Mask2 on = mask_of({{1}});
    const Mask2 off = mask_of({{0}});
    const MaskedMap both = si_average(canonicalize(x, on), canonicalize(y, on));
    CHECK(std::abs(double(both.features.at(0, 0, 0)) - 3.0) < 1e-7);
    CHECK(both.mask.at(0, 0) == real(1));
    const MaskedMap one = si_average(canonicalize(x, on), canonicalize(y, off));
    CHECK(std::abs(double(one.features.at(0, 0, 0)) - 2.0) < 1e-7);
    CHECK(one.mask.at(0, 0) == real(1));
    const MaskedMap none = si_average(canonicalize(x, off), canonicalize(y, off));
    CHECK(none.features.at(0, 0, 0) == real(0));
    CHECK(none.mask.at(0, 0) == real(0));
    for (std::uint64_t s = 0; s < 10; ++s) {
        const MaskedMap p = random_masked_map(2, 5, 5, 0.5, s);
        const MaskedMap q = random_masked_map(2, 5, 5, 0.5, s + 31);
        CHECK(max_abs_diff(si_average(p, q).features, ref::si_average(p, q).features) < 1e-10);
    }
    CHECK_THROWS_AS(si_average(random_masked_map(1, 2, 2, 1, 0), random_masked_map(1, 2, 3, 1, 0)),
                    DimensionError);
}

TEST_CASE("si_average backward: half shares and copy-through") {
    const Mask2 on = mask_of({{1}});
    const Mask2 off = mask_of({{0}});
    const MaskedMap px = canonicalize(array_1ch({{2}}), on);
    const Array3 d(1, 1, 1, real(1));
    const OpGrad both = si_average_backward(px, canonicalize(array_1ch({{4}}), on), d);
    CHECK(std::abs(double(both.d_inputs[0].at(0, 0, 0)) - 0.5) < 1e-7);
    CHECK(std::abs(double(both.d_inputs[1].at(0, 0, 0)) - 0.5) < 1e-7);
    const OpGrad xonly = si_average_backward(px, canonicalize(array_1ch({{4}}), off), d);
    CHECK(std::abs(double(xonly.d_inputs[0].at(0, 0, 0)) - 1.0) < 1e-7);
    CHECK(xonly.d_inputs[1].at(0, 0, 0) == real(0));
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(gradcheck_si_average(s).pass(1e-4));
}

TEST_CASE("si_concat_conv: dense masks reduce to a plain 1x1 conv with k3") {
    const MaskedMap p = random_masked_map(2, 4, 4, 1.1, 5);
    const MaskedMap q = random_masked_map(3, 4, 4, 1.1, 6);
    const AdaptiveKernel ak = random_adaptive(2, 2, 3, 7);
    const Array3 z = si_concat_conv_forward(p, q, ak).features;
    const Array3 dense = ref::dense_conv1x1(p.features, q.features, ak.k3, ak.bias, 2);
    CHECK(max_abs_diff(z, dense) < 1e-10);
}

TEST_CASE("si_concat_conv: y all invalid selects k1") {
    const MaskedMap p = random_masked_map(2, 4, 4, 1.1, 8);
    const MaskedMap q = canonicalize(Array3(3, 4, 4), Mask2(4, 4));
    const AdaptiveKernel ak = random_adaptive(2, 2, 3, 9);
    const Array3 z = si_concat_conv_forward(p, q, ak).features;
    const Array3 k1_dense = ref::dense_conv1x1(p.features, q.features, ak.k1, ak.bias, 2);
    CHECK(max_abs_diff(z, k1_dense) < 1e-10);
}

TEST_CASE("si_concat_conv matches the per-pixel dispatch oracle") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const MaskedMap p = random_masked_map(2, 5, 5, 0.5, s);
        const MaskedMap q = random_masked_map(3, 5, 5, 0.5, s + 13);
        const AdaptiveKernel ak = random_adaptive(2, 2, 3, s);
        CHECK(max_abs_diff(si_concat_conv_forward(p, q, ak).features,
                           ref::si_concat_conv(p, q, ak).features) < 1e-10);
        const MaskedMap z = si_concat_conv_forward(p, q, ak);
        for (int u = 0; u < 5; ++u)
            for (int v = 0; v < 5; ++v) {
                const real want =
                    (p.mask.at(u, v) != real(0) || q.mask.at(u, v) != real(0)) ? real(1)
                                                                               : real(0);
                CHECK(z.mask.at(u, v) == want);
            }
    }
    CHECK_THROWS_AS(si_concat_conv_forward(random_masked_map(2, 4, 4, 1, 0),
                                           random_masked_map(2, 4, 4, 1, 0),
                                           AdaptiveKernel::zeros(2, 2, 3)),
                    DimensionError);
}

TEST_CASE("si_concat_conv backward: unselected kernels stay untouched") {
    // x valid everywhere, so scenario 2 (y-only) never occurs.
    const MaskedMap p = random_masked_map(2, 4, 4, 1.1, 11);
    const MaskedMap q = random_masked_map(3, 4, 4, 0.5, 12);
    const AdaptiveKernel ak = random_adaptive(2, 2, 3, 13);
    Rng rng(14);
    Array3 d(2, 4, 4);
    for (real& v : d.data) v = real(rng.uniform(-1, 1));
    const OpGrad g = si_concat_conv_backward(p, q, ak, d);
    for (const real v : g.d_k2) CHECK(v == real(0));
    const OpGrad zero = si_concat_conv_backward(p, q, ak, Array3(2, 4, 4));
    for (const real v : zero.d_k1) CHECK(v == real(0));
    for (const real v : zero.d_k3) CHECK(v == real(0));
    for (const real v : zero.d_bias) CHECK(v == real(0));
}

TEST_CASE("si_concat_conv backward matches finite differences") {
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(gradcheck_si_concat_conv(s).pass(1e-4));
}

TEST_CASE("relu_masked forward and gradient gate") {
    const Array3 x = array_1ch({{2, -3}});
    const Mask2 m = mask_of({{1, 1}});
    const MaskedMap z = relu_masked(canonicalize(x, m));
    CHECK(z.features.at(0, 0, 0) == real(2));
    CHECK(z.features.at(0, 0, 1) == real(0));
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(gradcheck_relu(s).pass(1e-4));
}

TEST_CASE("mask-out invariance: garbage at invalid locations changes nothing") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const MaskedMap p = random_masked_map(2, 6, 6, 0.5, s);
        const MaskedMap q = random_masked_map(2, 6, 6, 0.5, s + 41);
        const MaskedMap pg = with_garbage(p, s);
        const MaskedMap qg = with_garbage(q, s + 1);
        const ConvKernel kern = random_kernel(2, 2, 1, s);
        const AdaptiveKernel ak = random_adaptive(2, 2, 2, s);
        CHECK(bitwise_equal(si_conv_forward(p, kern), si_conv_forward(pg, kern)));
        CHECK(bitwise_equal(si_upsample_forward(p), si_upsample_forward(pg)));
        CHECK(bitwise_equal(si_maxpool(p, 2), si_maxpool(pg, 2)));
        CHECK(bitwise_equal(si_average(p, q), si_average(pg, qg)));
        CHECK(bitwise_equal(si_concat_conv_forward(p, q, ak),
                            si_concat_conv_forward(pg, qg, ak)));
        CHECK(bitwise_equal(relu_masked(p), relu_masked(pg)));

        // Gradients are equally indifferent to the garbage.
        Rng rng(s);
        Array3 d(2, 6, 6);
        for (real& v : d.data) v = real(rng.uniform(-1, 1));
        const OpGrad ga = si_conv_backward(p, kern, d);
        const OpGrad gb = si_conv_backward(pg, kern, d);
        CHECK(ga.d_weights == gb.d_weights);
        CHECK(ga.d_inputs[0].data == gb.d_inputs[0].data);
    }
}

TEST_CASE("dense reduction: all-ones masks recover conventional operators") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const MaskedMap p = random_masked_map(2, 8, 8, 1.1, s);
        const MaskedMap q = random_masked_map(2, 8, 8, 1.1, s + 3);
        ConvKernel kern = random_kernel(2, 2, 2, s);
        ConvKernel scaled = kern;
        for (real& w : scaled.weights) w /= real(25);
        const Array3 si = si_conv_forward(p, kern).features;
        const Array3 dense = ref::dense_conv(p.features, scaled);
        for (int co = 0; co < 2; ++co)
            for (int u = 2; u < 6; ++u)
                for (int v = 2; v < 6; ++v) {
                    const double a = double(si.at(co, u, v)), b = double(dense.at(co, u, v));
                    CHECK(std::abs(a - b) <= 1e-9 * std::max({std::abs(a), std::abs(b), 1e-12}));
                }
        const Array3 up = si_upsample_forward(p).features;
        const Array3 up_dense = ref::dense_bilinear_upsample(p.features);
        for (std::size_t i = 0; i < up.size(); ++i) {
            const double a = double(up.data[i]), b = double(up_dense.data[i]);
            CHECK(std::abs(a - b) <= 1e-9 * std::max({std::abs(a), std::abs(b), 1e-12}));
        }
        const Array3 avg = si_average(p, q).features;
        const Array3 avg_dense = ref::dense_average(p.features, q.features);
        for (std::size_t i = 0; i < avg.size(); ++i) {
            const double a = double(avg.data[i]), b = double(avg_dense.data[i]);
            CHECK(std::abs(a - b) <= 1e-9 * std::max({std::abs(a), std::abs(b), 1e-12}));
        }
    }
}

TEST_CASE("normalization property: valid outputs of a constant field are c + b") {
    Rng rng(77);
    ConvKernel ones = ones_kernel(2, real(0.5));
    for (int trial = 0; trial < 50; ++trial) {
        const int H = 14, W = 14;
        Mask2 m(H, W);
        for (int u = 1; u < H; u += 3)
            for (int v = 1; v < W; v += 3) m.at(u, v) = 1;
        for (int u = 0; u < H; ++u)
            for (int v = 0; v < W; ++v)
                if (rng.uniform() < 0.25) m.at(u, v) = 1;
        const MaskedMap z = si_conv_forward(canonicalize(Array3(1, H, W, real(7)), m), ones);
        for (int u = 0; u < H; ++u)
            for (int v = 0; v < W; ++v) {
                CHECK(z.mask.at(u, v) == real(1));
                CHECK(std::abs(double(z.features.at(0, u, v)) - 7.5) < 1e-6);
            }
    }
}

TEST_CASE("mask propagation laws") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const MaskedMap p = random_masked_map(1, 8, 8, 0.3, s);
        const ConvKernel kern = random_kernel(1, 1, 2, s);
        const Mask2 conv_mask = si_conv_forward(p, kern).mask;
        const Mask2 count = window_valid_count(p.mask, 2);
        for (int u = 0; u < 8; ++u)
            for (int v = 0; v < 8; ++v)
                CHECK(conv_mask.at(u, v) == (count.at(u, v) > real(0) ? real(1) : real(0)));
        CHECK(si_upsample_forward(p).mask.data == ref::si_upsample(p).mask.data);
        CHECK(si_maxpool(p, 2).mask.data == ref::si_maxpool(p, 2).mask.data);
    }
}

TEST_CASE("every operator emits canonical output with a binary mask") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const MaskedMap p = random_masked_map(2, 6, 6, 0.4, s);
        const MaskedMap q = random_masked_map(2, 6, 6, 0.4, s + 17);
        const ConvKernel kern = random_kernel(2, 2, 1, s);
        const AdaptiveKernel ak = random_adaptive(2, 2, 2, s);
        for (const MaskedMap& z :
             {si_conv_forward(p, kern), si_upsample_forward(p), si_maxpool(p, 2),
              si_average(p, q), si_concat_conv_forward(p, q, ak), relu_masked(p)}) {
            CHECK(z.is_canonical());
            CHECK(z.mask.is_binary());
            CHECK(z.features.all_finite());
        }
    }
}
