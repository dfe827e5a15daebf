#include "hms/selftest.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "hms/evaluation.hpp"
#include "hms/gradcheck.hpp"
#include "hms/network.hpp"
#include "hms/reference.hpp"
#include "hms/rng.hpp"

namespace hms {

namespace {

double max_abs_diff(const Array3& a, const Array3& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
    return worst;
}

double max_rel_diff(const Array3& a, const Array3& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(double(a.data[i]) - double(b.data[i]));
        const double scale = std::max({std::abs(double(a.data[i])),
                                       std::abs(double(b.data[i])), 1e-12});
        worst = std::max(worst, d / scale);
    }
    return worst;
}

bool masks_equal(const Mask2& a, const Mask2& b) { return a.data == b.data; }

// Injects garbage (including non-finite values) at invalid locations.
MaskedMap with_garbage(const MaskedMap& p, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x67617262ULL));
    MaskedMap out = p;
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < p.height(); ++u)
            for (int v = 0; v < p.width(); ++v) {
                if (p.mask.at(u, v) != real(0)) continue;
                const double roll = rng.uniform();
                real g;
                if (roll < 0.1)
                    g = std::numeric_limits<real>::quiet_NaN();
                else if (roll < 0.2)
                    g = std::numeric_limits<real>::infinity();
                else
                    g = real(rng.uniform(-1e6, 1e6));
                out.features.at(c, u, v) = g;
            }
    return out;
}

bool bitwise_equal(const MaskedMap& a, const MaskedMap& b) {
    return a.features.data == b.features.data && a.mask.data == b.mask.data;
}

ConvKernel rand_kernel(int co, int ci, int k, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x6b6bULL));
    ConvKernel kern = ConvKernel::zeros(co, ci, k);
    for (real& w : kern.weights) w = real(rng.uniform(-1, 1));
    for (real& b : kern.bias) b = real(rng.uniform(-0.5, 0.5));
    return kern;
}

AdaptiveKernel rand_adaptive(int co, int c1, int c2, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x616bULL));
    AdaptiveKernel ak = AdaptiveKernel::zeros(co, c1, c2);
    for (real& w : ak.k1) w = real(rng.uniform(-1, 1));
    for (real& w : ak.k2) w = real(rng.uniform(-1, 1));
    for (real& w : ak.k3) w = real(rng.uniform(-1, 1));
    for (real& b : ak.bias) b = real(rng.uniform(-0.5, 0.5));
    return ak;
}

}  // namespace

int run_selftest(std::ostream& out) {
    struct Property {
        std::string name;
        std::function<bool()> check;
    };
    std::vector<Property> props;

    props.push_back({"canonical form idempotent", [] {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const MaskedMap p = random_masked_map(3, 7, 5, 0.5, s);
            const MaskedMap again = canonicalize(p.features, p.mask);
            if (!bitwise_equal(p, again) || !p.is_canonical()) return false;
        }
        return true;
    }});

    props.push_back({"mask-out invariance (all ops)", [] {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const MaskedMap p = random_masked_map(2, 6, 6, 0.5, s);
            const MaskedMap q = random_masked_map(2, 6, 6, 0.5, s + 100);
            const MaskedMap pg = with_garbage(p, s);
            const MaskedMap qg = with_garbage(q, s + 1);
            const ConvKernel kern = rand_kernel(2, 2, 1, s);
            const AdaptiveKernel ak = rand_adaptive(2, 2, 2, s);
            if (!bitwise_equal(si_conv_forward(p, kern), si_conv_forward(pg, kern))) return false;
            if (!bitwise_equal(si_upsample_forward(p), si_upsample_forward(pg))) return false;
            if (!bitwise_equal(si_maxpool(p, 2), si_maxpool(pg, 2))) return false;
            if (!bitwise_equal(si_average(p, q), si_average(pg, qg))) return false;
            if (!bitwise_equal(si_concat_conv_forward(p, q, ak),
                               si_concat_conv_forward(pg, qg, ak)))
                return false;
            if (!bitwise_equal(relu_masked(p), relu_masked(pg))) return false;
        }
        return true;
    }});

    props.push_back({"oracle agreement (serial reference)", [] {
        for (std::uint64_t s = 0; s < 20; ++s) {
            const MaskedMap p = random_masked_map(2, 6, 6, 0.5, s);
            const MaskedMap q = random_masked_map(2, 6, 6, 0.5, s + 50);
            const ConvKernel kern = rand_kernel(2, 2, 1, s);
            const AdaptiveKernel ak = rand_adaptive(3, 2, 2, s);
            if (max_abs_diff(si_conv_forward(p, kern).features,
                             ref::si_conv(p, kern).features) > 1e-10)
                return false;
            if (max_abs_diff(si_upsample_forward(p).features,
                             ref::si_upsample(p).features) > 1e-10)
                return false;
            if (max_abs_diff(si_maxpool(p, 2).features, ref::si_maxpool(p, 2).features) > 1e-10)
                return false;
            if (max_abs_diff(si_average(p, q).features, ref::si_average(p, q).features) > 1e-10)
                return false;
            if (max_abs_diff(si_concat_conv_forward(p, q, ak).features,
                             ref::si_concat_conv(p, q, ak).features) > 1e-10)
                return false;
        }
        return true;
    }});

    props.push_back({"dense reduction (all-ones masks)", [] {
        for (std::uint64_t s = 0; s < 5; ++s) {
            MaskedMap p = random_masked_map(2, 8, 8, 1.1, s);  // density > 1: all valid
            MaskedMap q = random_masked_map(2, 8, 8, 1.1, s + 9);
            ConvKernel kern = rand_kernel(2, 2, 2, s);
            const int K = kern.extent();
            ConvKernel scaled = kern;
            for (real& w : scaled.weights) w /= real(K * K);
            const Array3 si = si_conv_forward(p, kern).features;
            const Array3 dense = ref::dense_conv(p.features, scaled);
            for (int co = 0; co < 2; ++co)  // interior only
                for (int u = 2; u < 6; ++u)
                    for (int v = 2; v < 6; ++v) {
                        const double a = double(si.at(co, u, v)), b = double(dense.at(co, u, v));
                        if (std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}) > 1e-9)
                            return false;
                    }
            if (max_rel_diff(si_upsample_forward(p).features,
                             ref::dense_bilinear_upsample(p.features)) > 1e-9)
                return false;
            if (max_rel_diff(si_average(p, q).features,
                             ref::dense_average(p.features, q.features)) > 1e-9)
                return false;
            const AdaptiveKernel ak = rand_adaptive(3, 2, 2, s);
            if (max_rel_diff(si_concat_conv_forward(p, q, ak).features,
                             ref::dense_conv1x1(p.features, q.features, ak.k3, ak.bias, 3)) >
                1e-9)
                return false;
        }
        return true;
    }});

    props.push_back({"mask propagation laws", [] {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const MaskedMap p = random_masked_map(1, 8, 8, 0.3, s);
            const MaskedMap q = random_masked_map(1, 8, 8, 0.3, s + 77);
            const ConvKernel kern = rand_kernel(1, 1, 2, s);
            const Mask2 conv_mask = si_conv_forward(p, kern).mask;
            const Mask2 count = window_valid_count(p.mask, 2);
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v)
                    if ((count.at(u, v) > real(0) ? real(1) : real(0)) != conv_mask.at(u, v))
                        return false;
            const Mask2 avg_mask = si_average(p, q).mask;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v) {
                    const real want =
                        (p.mask.at(u, v) != real(0) || q.mask.at(u, v) != real(0)) ? real(1)
                                                                                   : real(0);
                    if (avg_mask.at(u, v) != want) return false;
                }
            if (!masks_equal(si_upsample_forward(p).mask, ref::si_upsample(p).mask)) return false;
            if (!masks_equal(si_maxpool(p, 2).mask, ref::si_maxpool(p, 2).mask)) return false;
        }
        return true;
    }});

    props.push_back({"convolution normalization on constant fields", [] {
        Rng rng(12345);
        const int H = 16, W = 16;
        ConvKernel ones = ConvKernel::zeros(1, 1, 2);
        for (real& w : ones.weights) w = 1;
        ones.bias[0] = real(0.5);
        for (int trial = 0; trial < 20; ++trial) {
            Mask2 m(H, W);
            for (int u = 1; u < H; u += 3)
                for (int v = 1; v < W; v += 3) m.at(u, v) = 1;  // every window sees a point
            for (int u = 0; u < H; ++u)
                for (int v = 0; v < W; ++v)
                    if (rng.uniform() < 0.3) m.at(u, v) = 1;
            Array3 x(1, H, W, real(7));
            const MaskedMap z = si_conv_forward(canonicalize(x, m), ones);
            for (int u = 0; u < H; ++u)
                for (int v = 0; v < W; ++v)
                    if (std::abs(double(z.features.at(0, u, v)) - 7.5) > 1e-6) return false;
        }
        return true;
    }});

    props.push_back({"metric oracle agreement", [] {
        Rng rng(999);
        for (int trial = 0; trial < 20; ++trial) {
            const MaskedMap gt = random_masked_map(1, 8, 8, 0.7, std::uint64_t(trial), 1.0, 50.0);
            if (gt.mask.count_valid() == 0) continue;
            Array3 pred(1, 8, 8);
            for (real& v : pred.data) v = real(rng.uniform(1.0, 50.0));
            const MetricReport rep = compute_metrics(pred, gt);
            // Plain scalar-loop evaluation of the five definitions.
            double se = 0, ae = 0, ise = 0, iae = 0, rel = 0;
            int n = 0;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v) {
                    if (gt.mask.at(u, v) == real(0)) continue;
                    const double o = double(pred.at(0, u, v)), t = double(gt.features.at(0, u, v));
                    se += (o - t) * (o - t);
                    ae += std::abs(o - t);
                    ise += (1 / o - 1 / t) * (1 / o - 1 / t);
                    iae += std::abs(1 / o - 1 / t);
                    rel += std::abs(o - t) / t;
                    ++n;
                }
            const auto close = [](double a, double b) {
                return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}) < 1e-9;
            };
            if (!close(rep.rmse_mm, std::sqrt(se / n) * 1000)) return false;
            if (!close(rep.mae_mm, ae / n * 1000)) return false;
            if (!close(rep.irmse_per_km, std::sqrt(ise / n) * 1000)) return false;
            if (!close(rep.imae_per_km, iae / n * 1000)) return false;
            if (!close(rep.rel, rel / n)) return false;
            if (rep.rmse_mm < rep.mae_mm) return false;
        }
        return true;
    }});

    props.push_back({"end-to-end mask-out invariance", [] {
        const HmsNet net(toy_net_config());
        ParamStore store;
        net.init_params(store, 4242);
        for (std::uint64_t s = 0; s < 5; ++s) {
            const MaskedMap input = random_masked_map(1, 16, 16, 0.1, s, 1.0, 50.0);
            const MaskedMap garbage = with_garbage(input, s);
            const Array3 a = net.forward(input, store).prediction;
            const Array3 b = net.forward(garbage, store).prediction;
            if (a.data != b.data) return false;
        }
        return true;
    }});

    int failures = 0;
    for (const Property& p : props) {
        bool ok = false;
        try {
            ok = p.check();
        } catch (const std::exception& e) {
            out << "[FAIL] " << p.name << " (exception: " << e.what() << ")\n";
            ++failures;
            continue;
        }
        out << (ok ? "[ok]   " : "[FAIL] ") << p.name << "\n";
        if (!ok) ++failures;
    }
    return failures;
}

}  // namespace hms
