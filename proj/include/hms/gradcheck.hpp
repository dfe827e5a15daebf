#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hms/network.hpp"

namespace hms {

struct GradGroupReport {
    std::string group;
    double max_rel_err = 0;
};

struct GradCheckReport {
    std::string target;
    std::vector<GradGroupReport> groups;
    double worst() const;
    bool pass(double tol) const { return worst() < tol; }
};

// Central finite differences (default step 1e-5) against the analytic
// backward passes; relative error uses max(|analytic|, |numeric|, 1e-6).
GradCheckReport gradcheck_si_conv(std::uint64_t seed, double h = 1e-5);
GradCheckReport gradcheck_si_upsample(std::uint64_t seed, double h = 1e-5);
GradCheckReport gradcheck_si_maxpool(std::uint64_t seed, double h = 1e-5);
GradCheckReport gradcheck_si_average(std::uint64_t seed, double h = 1e-5);
GradCheckReport gradcheck_si_concat_conv(std::uint64_t seed, double h = 1e-5);
GradCheckReport gradcheck_relu(std::uint64_t seed, double h = 1e-5);
GradCheckReport gradcheck_loss(std::uint64_t seed, double h = 1e-5);

// Whole-network check on an 8x8 toy configuration: analytic parameter
// gradients vs finite differences on `samples` randomly chosen parameters.
GradCheckReport gradcheck_network(std::uint64_t seed, int samples = 50, double h = 1e-5);

GradCheckReport gradcheck_by_name(const std::string& op, std::uint64_t seed);

// Random canonical masked map with the given valid-location density.
MaskedMap random_masked_map(int channels, int height, int width, double density,
                            std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace hms
