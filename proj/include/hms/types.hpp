#pragma once

#include <stdexcept>
#include <string>

namespace hms {

// Floating type for all internal math. Gradient checking requires the
// 64-bit type; configure with -DHMS_REAL_FLOAT32=ON only for deployment
// builds that skip the test suite.
#ifdef HMS_REAL_FLOAT32
using real = float;
#else
using real = double;
#endif

// Guard added to normalization denominators. Denominators are either
// exactly zero (paired with a zero numerator) or >= 1/16, so the guard
// perturbs valid outputs by less than 2e-11 relative.
inline constexpr real kEps = real(1e-12);

// Upsampled-mask nonzero test threshold: the bilinear stencil never
// produces weights below 1/16, so anything under this is rounding noise.
inline constexpr real kMaskNonzero = real(1e-6);

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyGroundTruthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when training hits a non-finite loss; carries diagnostics.
struct TrainAbortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hms
