#pragma once

#include <iosfwd>

namespace hms {

// Runs the library invariant suite (mask-out invariance, dense reductions,
// mask propagation laws, oracle agreement, the convolution normalization
// property) and prints one pass/fail row per property. Returns the number
// of failing properties.
int run_selftest(std::ostream& out);

}  // namespace hms
