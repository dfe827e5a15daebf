#pragma once

#include <string>
#include <vector>

#include "hms/array.hpp"

namespace hms {

// Learnable weights of a masked window-normalized convolution.
// Spatial extent is (2*half_width+1)^2, stride fixed at 1.
struct ConvKernel {
    int out_channels = 0;
    int in_channels = 0;
    int half_width = 0;
    std::vector<real> weights;  // out x in x K x K, row-major
    std::vector<real> bias;     // out

    int extent() const { return 2 * half_width + 1; }
    real w(int co, int ci, int i, int j) const {
        const int K = extent();
        return weights[((std::size_t(co) * std::size_t(in_channels) + std::size_t(ci)) *
                            std::size_t(K) +
                        std::size_t(i)) *
                           std::size_t(K) +
                       std::size_t(j)];
    }
    static ConvKernel zeros(int out_ch, int in_ch, int half_width);
};

// Three 1x1 kernel sets for the joint concatenation + convolution; the set
// applied at each pixel is chosen by the (m_x, m_y) validity pattern.
struct AdaptiveKernel {
    int out_channels = 0;
    int c1 = 0;  // channels of the first input
    int c2 = 0;  // channels of the second input
    std::vector<real> k1;  // out x (c1+c2), x valid only
    std::vector<real> k2;  // out x (c1+c2), y valid only
    std::vector<real> k3;  // out x (c1+c2), both valid
    std::vector<real> bias;

    int in_total() const { return c1 + c2; }
    static AdaptiveKernel zeros(int out_ch, int c1, int c2);
};

// Gradients produced by a backward pass: one entry per input map, plus
// whichever parameter buffers the operator owns. Input gradients are
// exactly zero wherever the corresponding input mask is zero.
struct OpGrad {
    std::vector<Array3> d_inputs;
    std::vector<real> d_weights;
    std::vector<real> d_bias;
    std::vector<real> d_k1;
    std::vector<real> d_k2;
    std::vector<real> d_k3;
};

// Masked window-normalized convolution: each output is the kernel-weighted
// sum over valid neighbors divided by the valid-neighbor count. Output mask
// is the window max of the input mask; bias is added only at valid outputs.
MaskedMap si_conv_forward(const MaskedMap& p, const ConvKernel& kern);
OpGrad si_conv_backward(const MaskedMap& p, const ConvKernel& kern, const Array3& d_out);

// Fixed 2x bilinear upsampling of masked features, renormalized by the
// upsampled mask. Output pixel (U,V) samples the input at
// ((U+0.5)/2 - 0.5, (V+0.5)/2 - 0.5) with clamp-to-edge.
MaskedMap si_upsample_forward(const MaskedMap& p);
OpGrad si_upsample_backward(const MaskedMap& p, const Array3& d_out);

// Window max over valid entries, stride = window. Ties break to the first
// valid entry in row-major order (relevant only to the backward routing).
MaskedMap si_maxpool(const MaskedMap& p, int window);
OpGrad si_maxpool_backward(const MaskedMap& p, int window, const Array3& d_out);

// Validity-weighted mean of two maps: mean where both are valid, copy of
// the valid side where one is, zero where neither.
MaskedMap si_average(const MaskedMap& p, const MaskedMap& q);
OpGrad si_average_backward(const MaskedMap& p, const MaskedMap& q, const Array3& d_out);

// Channel concatenation followed by a 1x1 convolution whose kernel set is
// selected per pixel by the two masks; both-invalid pixels emit zero.
MaskedMap si_concat_conv_forward(const MaskedMap& p, const MaskedMap& q,
                                 const AdaptiveKernel& ak);
OpGrad si_concat_conv_backward(const MaskedMap& p, const MaskedMap& q, const AdaptiveKernel& ak,
                               const Array3& d_out);

// ReLU gated by the mask; the mask itself is unchanged.
MaskedMap relu_masked(const MaskedMap& p);
OpGrad relu_masked_backward(const MaskedMap& p, const Array3& d_out);

// Valid-neighbor count per output pixel of a stride-1 window of half-width k,
// with out-of-bounds treated as invalid. Shared by forward and backward.
Mask2 window_valid_count(const Mask2& m, int half_width);

// Row/column tap table of the fixed 2x bilinear stencil: output index i
// samples input lo(i) with weight (1-frac(i)) and hi(i) with weight frac(i).
struct BilinearTaps {
    std::vector<int> lo, hi;
    std::vector<real> w_hi;  // weight of hi; lo gets 1 - w_hi
};
BilinearTaps bilinear_taps(int in_size);

}  // namespace hms
