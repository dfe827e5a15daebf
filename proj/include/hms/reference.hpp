#pragma once

#include "hms/si_ops.hpp"

namespace hms::ref {

// Serial reference implementations, written as direct per-pixel evaluations
// of the operator definitions with no shared code beyond the array types.
// They are the oracles the optimized kernels are tested against and the
// baseline the benchmark target compares against. Keep them simple; do not
// optimize.

MaskedMap si_conv(const MaskedMap& p, const ConvKernel& kern);
MaskedMap si_upsample(const MaskedMap& p);
MaskedMap si_maxpool(const MaskedMap& p, int window);
MaskedMap si_average(const MaskedMap& p, const MaskedMap& q);
MaskedMap si_concat_conv(const MaskedMap& p, const MaskedMap& q, const AdaptiveKernel& ak);

// Dense counterparts for the all-ones-mask reduction checks.
Array3 dense_conv(const Array3& x, const ConvKernel& kern);            // zero padding
Array3 dense_bilinear_upsample(const Array3& x);                       // same stencil
Array3 dense_average(const Array3& x, const Array3& y);                // (x+y)/2
Array3 dense_conv1x1(const Array3& x, const Array3& y,                 // [x;y] * k + b
                     const std::vector<real>& k, const std::vector<real>& bias, int out_ch);

}  // namespace hms::ref
