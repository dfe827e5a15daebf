#include "hms/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "hms/rng.hpp"
#include "hms/trainer.hpp"

namespace hms {

double GradCheckReport::worst() const {
    double w = 0;
    for (const GradGroupReport& g : groups) w = std::max(w, g.max_rel_err);
    return w;
}

MaskedMap random_masked_map(int channels, int height, int width, double density,
                            std::uint64_t seed, double lo, double hi) {
    Rng rng(mix_seed(seed, 0x6d617036ULL));
    Array3 x(channels, height, width);
    Mask2 m(height, width);
    for (int u = 0; u < height; ++u)
        for (int v = 0; v < width; ++v) m.at(u, v) = rng.uniform() < density ? real(1) : real(0);
    for (int c = 0; c < channels; ++c)
        for (int u = 0; u < height; ++u)
            for (int v = 0; v < width; ++v) x.at(c, u, v) = real(rng.uniform(lo, hi));
    return canonicalize(x, m);
}

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Fixed random cotangent: the scalar objective is sum(r * forward), whose
// parameter/input gradients equal backward(r).
Array3 random_cotangent(int c, int h, int w, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x636f7461ULL));
    Array3 r(c, h, w);
    for (real& v : r.data) v = real(rng.uniform(-1.0, 1.0));
    return r;
}

double dot_with(const Array3& r, const Array3& f) {
    double s = 0;
    for (std::size_t i = 0; i < r.size(); ++i) s += double(r.data[i]) * double(f.data[i]);
    return s;
}

// Max relative error between analytic gradients of a scalar slot vector and
// central differences obtained by perturbing each slot.
double check_group(std::vector<real>& slots, const std::vector<real>& analytic,
                   const std::function<double()>& objective, double h,
                   const std::vector<char>* active = nullptr) {
    double worst = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (active && !(*active)[i]) continue;
        const real keep = slots[i];
        slots[i] = keep + real(h);
        const double up = objective();
        slots[i] = keep - real(h);
        const double dn = objective();
        slots[i] = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, rel_err(double(analytic[i]), fd));
    }
    return worst;
}

// Flags feature slots whose mask is valid; invalid slots have zero analytic
// gradient by contract and zero numeric gradient by mask-out invariance.
std::vector<char> valid_slots(const MaskedMap& p) {
    std::vector<char> active(p.features.size(), 0);
    for (int c = 0; c < p.channels(); ++c)
        for (int u = 0; u < p.height(); ++u)
            for (int v = 0; v < p.width(); ++v)
                if (p.mask.at(u, v) != real(0))
                    active[(std::size_t(c) * std::size_t(p.height()) + std::size_t(u)) *
                               std::size_t(p.width()) +
                           std::size_t(v)] = 1;
    return active;
}

ConvKernel random_conv_kernel(int out_ch, int in_ch, int k, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x6b65726eULL));
    ConvKernel kern = ConvKernel::zeros(out_ch, in_ch, k);
    for (real& w : kern.weights) w = real(rng.uniform(-1.0, 1.0));
    for (real& b : kern.bias) b = real(rng.uniform(-0.5, 0.5));
    return kern;
}

AdaptiveKernel random_adaptive_kernel(int out_ch, int c1, int c2, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x616b726eULL));
    AdaptiveKernel ak = AdaptiveKernel::zeros(out_ch, c1, c2);
    for (real& w : ak.k1) w = real(rng.uniform(-1.0, 1.0));
    for (real& w : ak.k2) w = real(rng.uniform(-1.0, 1.0));
    for (real& w : ak.k3) w = real(rng.uniform(-1.0, 1.0));
    for (real& b : ak.bias) b = real(rng.uniform(-0.5, 0.5));
    return ak;
}

}  // namespace

GradCheckReport gradcheck_si_conv(std::uint64_t seed, double h) {
    MaskedMap p = random_masked_map(2, 6, 6, 0.6, seed);
    ConvKernel kern = random_conv_kernel(2, 2, 1, seed);
    const Array3 r = random_cotangent(2, 6, 6, seed);
    const auto objective = [&] { return dot_with(r, si_conv_forward(p, kern).features); };
    const OpGrad grad = si_conv_backward(p, kern, r);
    const std::vector<char> active = valid_slots(p);

    GradCheckReport rep;
    rep.target = "si_conv";
    rep.groups.push_back(
        {"weights", check_group(kern.weights, grad.d_weights, objective, h)});
    rep.groups.push_back({"bias", check_group(kern.bias, grad.d_bias, objective, h)});
    rep.groups.push_back({"input", check_group(p.features.data, grad.d_inputs[0].data,
                                               objective, h, &active)});
    return rep;
}

GradCheckReport gradcheck_si_upsample(std::uint64_t seed, double h) {
    MaskedMap p = random_masked_map(2, 4, 5, 0.6, seed);
    const Array3 r = random_cotangent(2, 8, 10, seed);
    const auto objective = [&] { return dot_with(r, si_upsample_forward(p).features); };
    const OpGrad grad = si_upsample_backward(p, r);
    const std::vector<char> active = valid_slots(p);
    GradCheckReport rep;
    rep.target = "si_upsample";
    rep.groups.push_back({"input", check_group(p.features.data, grad.d_inputs[0].data,
                                               objective, h, &active)});
    return rep;
}

GradCheckReport gradcheck_si_maxpool(std::uint64_t seed, double h) {
    // Regenerate until every window's top two valid values are separated by
    // much more than the step, keeping the argmax stable under perturbation.
    MaskedMap p;
    for (std::uint64_t attempt = 0;; ++attempt) {
        p = random_masked_map(2, 6, 6, 0.7, mix_seed(seed, attempt));
        bool ok = true;
        for (int c = 0; c < 2 && ok; ++c)
            for (int wu = 0; wu < 3 && ok; ++wu)
                for (int wv = 0; wv < 3 && ok; ++wv) {
                    std::vector<double> vals;
                    for (int i = 0; i < 2; ++i)
                        for (int j = 0; j < 2; ++j)
                            if (p.mask.at(2 * wu + i, 2 * wv + j) != real(0))
                                vals.push_back(double(p.features.at(c, 2 * wu + i, 2 * wv + j)));
                    std::sort(vals.rbegin(), vals.rend());
                    if (vals.size() >= 2 && vals[0] - vals[1] < 1e-3) ok = false;
                }
        if (ok) break;
    }
    const Array3 r = random_cotangent(2, 3, 3, seed);
    const auto objective = [&] { return dot_with(r, si_maxpool(p, 2).features); };
    const OpGrad grad = si_maxpool_backward(p, 2, r);
    const std::vector<char> active = valid_slots(p);
    GradCheckReport rep;
    rep.target = "si_maxpool";
    rep.groups.push_back({"input", check_group(p.features.data, grad.d_inputs[0].data,
                                               objective, h, &active)});
    return rep;
}

GradCheckReport gradcheck_si_average(std::uint64_t seed, double h) {
    MaskedMap p = random_masked_map(3, 5, 5, 0.6, seed);
    MaskedMap q = random_masked_map(3, 5, 5, 0.6, mix_seed(seed, 1));
    const Array3 r = random_cotangent(3, 5, 5, seed);
    const auto objective = [&] { return dot_with(r, si_average(p, q).features); };
    const OpGrad grad = si_average_backward(p, q, r);
    const std::vector<char> ax = valid_slots(p), ay = valid_slots(q);
    GradCheckReport rep;
    rep.target = "si_average";
    rep.groups.push_back(
        {"input_x", check_group(p.features.data, grad.d_inputs[0].data, objective, h, &ax)});
    rep.groups.push_back(
        {"input_y", check_group(q.features.data, grad.d_inputs[1].data, objective, h, &ay)});
    return rep;
}

GradCheckReport gradcheck_si_concat_conv(std::uint64_t seed, double h) {
    MaskedMap p = random_masked_map(2, 5, 5, 0.55, seed);
    MaskedMap q = random_masked_map(3, 5, 5, 0.55, mix_seed(seed, 1));
    AdaptiveKernel ak = random_adaptive_kernel(2, 2, 3, seed);
    const Array3 r = random_cotangent(2, 5, 5, seed);
    const auto objective = [&] {
        return dot_with(r, si_concat_conv_forward(p, q, ak).features);
    };
    const OpGrad grad = si_concat_conv_backward(p, q, ak, r);
    const std::vector<char> ax = valid_slots(p), ay = valid_slots(q);
    GradCheckReport rep;
    rep.target = "si_concat_conv";
    rep.groups.push_back({"k1", check_group(ak.k1, grad.d_k1, objective, h)});
    rep.groups.push_back({"k2", check_group(ak.k2, grad.d_k2, objective, h)});
    rep.groups.push_back({"k3", check_group(ak.k3, grad.d_k3, objective, h)});
    rep.groups.push_back({"bias", check_group(ak.bias, grad.d_bias, objective, h)});
    rep.groups.push_back(
        {"input_x", check_group(p.features.data, grad.d_inputs[0].data, objective, h, &ax)});
    rep.groups.push_back(
        {"input_y", check_group(q.features.data, grad.d_inputs[1].data, objective, h, &ay)});
    return rep;
}

GradCheckReport gradcheck_relu(std::uint64_t seed, double h) {
    // Keep values away from the kink so central differences are valid.
    MaskedMap p;
    for (std::uint64_t attempt = 0;; ++attempt) {
        p = random_masked_map(2, 6, 6, 0.7, mix_seed(seed, attempt));
        bool ok = true;
        for (const real v : p.features.data)
            if (v != real(0) && std::abs(double(v)) < 1e-3) ok = false;
        if (ok) break;
    }
    const Array3 r = random_cotangent(2, 6, 6, seed);
    const auto objective = [&] { return dot_with(r, relu_masked(p).features); };
    const OpGrad grad = relu_masked_backward(p, r);
    const std::vector<char> active = valid_slots(p);
    GradCheckReport rep;
    rep.target = "relu_masked";
    rep.groups.push_back({"input", check_group(p.features.data, grad.d_inputs[0].data,
                                               objective, h, &active)});
    return rep;
}

GradCheckReport gradcheck_loss(std::uint64_t seed, double h) {
    const MaskedMap gt = random_masked_map(1, 6, 6, 0.6, seed, 1.0, 5.0);
    Rng rng(mix_seed(seed, 0x6c6f7373ULL));
    Array3 pred(1, 6, 6);
    for (real& v : pred.data) v = real(rng.uniform(0.0, 6.0));

    const auto objective = [&] { return double(masked_mse_loss(pred, gt).first); };
    const Array3 d_pred = masked_mse_loss(pred, gt).second;
    GradCheckReport rep;
    rep.target = "masked_mse_loss";
    rep.groups.push_back({"prediction", check_group(pred.data, d_pred.data, objective, h)});
    return rep;
}

GradCheckReport gradcheck_network(std::uint64_t seed, int samples, double h) {
    const HmsNet net(toy_net_config());
    ParamStore store;
    net.init_params(store, mix_seed(seed, 0x6e657430ULL));
    MaskedMap input = random_masked_map(1, 8, 8, 0.3, seed, 1.0, 5.0);
    const Array3 r = random_cotangent(1, 8, 8, mix_seed(seed, 2));

    const auto objective = [&] { return dot_with(r, net.forward(input, store).prediction); };
    ForwardResult res = net.forward(input, store);
    store.zero_grads();
    net.backward(res.tape, r, store);

    // Flatten (tensor, slot) pairs and sample without replacement.
    std::vector<std::pair<int, int>> slots;
    for (int t = 0; t < int(store.tensors().size()); ++t)
        for (int i = 0; i < int(store.tensors()[std::size_t(t)].size()); ++i)
            slots.push_back({t, i});
    Rng rng(mix_seed(seed, 0x73616d70ULL));
    const std::vector<int> chosen =
        rng.sample_without_replacement(int(slots.size()), std::min<int>(samples, int(slots.size())));

    GradCheckReport rep;
    rep.target = "network";
    double worst = 0;
    for (const int ci : chosen) {
        auto [t, i] = slots[std::size_t(ci)];
        ParamTensor& tensor = store.tensors()[std::size_t(t)];
        const real keep = tensor.value[std::size_t(i)];
        tensor.value[std::size_t(i)] = keep + real(h);
        const double up = objective();
        tensor.value[std::size_t(i)] = keep - real(h);
        const double dn = objective();
        tensor.value[std::size_t(i)] = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, rel_err(double(tensor.grad[std::size_t(i)]), fd));
    }
    rep.groups.push_back({"sampled_params", worst});
    return rep;
}

GradCheckReport gradcheck_by_name(const std::string& op, std::uint64_t seed) {
    if (op == "si_conv") return gradcheck_si_conv(seed);
    if (op == "si_upsample") return gradcheck_si_upsample(seed);
    if (op == "si_maxpool") return gradcheck_si_maxpool(seed);
    if (op == "si_average") return gradcheck_si_average(seed);
    if (op == "si_concat_conv") return gradcheck_si_concat_conv(seed);
    if (op == "relu") return gradcheck_relu(seed);
    if (op == "loss") return gradcheck_loss(seed);
    if (op == "network") return gradcheck_network(seed);
    throw ConfigError("gradcheck: unknown target '" + op +
                      "' (si_conv|si_upsample|si_maxpool|si_average|si_concat_conv|relu|loss|"
                      "network|all)");
}

}  // namespace hms
