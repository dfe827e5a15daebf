#include "hms/evaluation.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hms/rng.hpp"

namespace hms {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

}  // namespace

void MetricAccumulator::add(const Array3& pred_m, const MaskedMap& gt, const std::string& id) {
    if (pred_m.height != gt.height() || pred_m.width != gt.width() || pred_m.channels != 1)
        throw DimensionError("metrics: prediction shape " + pred_m.shape_str() +
                             " vs ground truth " + gt.features.shape_str());
    double se = 0, ae = 0, ise = 0, iae = 0, rel = 0;
    std::size_t n = 0, bad = 0;
    for (int u = 0; u < gt.height(); ++u)
        for (int v = 0; v < gt.width(); ++v) {
            if (gt.mask.at(u, v) == real(0)) continue;
            const double t = double(gt.features.at(0, u, v));
            if (!(t > 0.0))
                throw IntegrityError("metrics: nonpositive ground-truth depth at (" +
                                     std::to_string(u) + "," + std::to_string(v) + ")");
            const double o = double(pred_m.at(0, u, v));
            const double e = o - t;
            se += e * e;
            ae += std::abs(e);
            rel += std::abs(e) / t;
            if (o > 0.0) {
                const double ie = 1.0 / o - 1.0 / t;
                ise += ie * ie;
                iae += std::abs(ie);
            } else {
                ++bad;  // reported, never clamped
            }
            ++n;
        }
    if (n == 0) throw EmptyGroundTruthError("metrics: sample '" + id + "' has no valid pixels");

    SampleMetrics s;
    s.id = id;
    s.valid_count = n;
    s.rmse_mm = std::sqrt(se / double(n)) * 1000.0;
    s.mae_mm = ae / double(n) * 1000.0;
    s.rel = rel / double(n);
    s.nonpositive_pred = bad;
    s.inverse_ok = bad == 0;
    if (s.inverse_ok) {
        s.irmse_per_km = std::sqrt(ise / double(n)) * 1000.0;
        s.imae_per_km = iae / double(n) * 1000.0;
    } else {
        s.irmse_per_km = s.imae_per_km = std::numeric_limits<double>::quiet_NaN();
    }
    samples_.push_back(std::move(s));

    se_ += se;
    ae_ += ae;
    ise_ += ise;
    iae_ += iae;
    rel_ += rel;
    n_ += n;
    bad_ += bad;
}

MetricReport MetricAccumulator::report() const {
    if (n_ == 0) throw EmptyGroundTruthError("metrics: no valid pixels accumulated");
    MetricReport r;
    r.valid_count = n_;
    r.rmse_mm = std::sqrt(se_ / double(n_)) * 1000.0;
    r.mae_mm = ae_ / double(n_) * 1000.0;
    if (r.rmse_mm < r.mae_mm * (1.0 - 1e-12))
        throw IntegrityError("metrics: rmse below mae, accumulator corrupt");
    r.rel = rel_ / double(n_);
    r.nonpositive_pred = bad_;
    r.inverse_ok = bad_ == 0;
    if (r.inverse_ok) {
        r.irmse_per_km = std::sqrt(ise_ / double(n_)) * 1000.0;
        r.imae_per_km = iae_ / double(n_) * 1000.0;
    } else {
        r.irmse_per_km = r.imae_per_km = std::numeric_limits<double>::quiet_NaN();
    }
    r.per_sample = samples_;
    return r;
}

MetricReport compute_metrics(const Array3& pred_m, const MaskedMap& gt) {
    MetricAccumulator acc;
    acc.add(pred_m, gt);
    return acc.report();
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << "metric      value\n";
    os << "rmse_mm     " << fmt(rmse_mm) << "\n";
    os << "mae_mm      " << fmt(mae_mm) << "\n";
    if (inverse_ok) {
        os << "irmse_1/km  " << fmt(irmse_per_km) << "\n";
        os << "imae_1/km   " << fmt(imae_per_km) << "\n";
    } else {
        os << "irmse_1/km  failed (" << nonpositive_pred << " nonpositive predictions)\n";
        os << "imae_1/km   failed (" << nonpositive_pred << " nonpositive predictions)\n";
    }
    os << "rel         " << fmt(rel) << "\n";
    os << "valid_px    " << valid_count << "\n";
    return os.str();
}

std::string MetricReport::to_tsv_line() const {
    std::ostringstream os;
    os << fmt(rmse_mm) << "\t" << fmt(mae_mm) << "\t";
    if (inverse_ok)
        os << fmt(irmse_per_km) << "\t" << fmt(imae_per_km);
    else
        os << "nan\tnan";
    os << "\t" << fmt(rel) << "\t" << valid_count;
    return os.str();
}

Array3 nn_fill_baseline(const MaskedMap& input) {
    const int H = input.height(), W = input.width();
    struct Pt {
        int u, v;
        real d;
    };
    std::vector<Pt> valid;
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v)
            if (input.mask.at(u, v) != real(0)) valid.push_back({u, v, input.features.at(0, u, v)});
    Array3 out(1, H, W);
    if (valid.empty()) return out;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (H * W > 1024)
#endif
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v) {
            long best = std::numeric_limits<long>::max();
            int bu = -1, bv = -1;
            real bd = 0;
            for (const Pt& p : valid) {
                const long du = p.u - u, dv = p.v - v;
                const long d2 = du * du + dv * dv;
                if (d2 < best || (d2 == best && (p.u < bu || (p.u == bu && p.v < bv)))) {
                    best = d2;
                    bu = p.u;
                    bv = p.v;
                    bd = p.d;
                }
            }
            out.at(0, u, v) = bd;
        }
    return out;
}

Protocol protocol_from_string(const std::string& s) {
    if (s == "scene_noise" || s == "scene") return Protocol::scene_noise;
    if (s == "region_noise" || s == "region") return Protocol::region_noise;
    if (s == "sparsity") return Protocol::sparsity;
    throw ConfigError("unknown protocol '" + s + "' (scene_noise|region_noise|sparsity)");
}

std::vector<SweepPoint> robustness_sweep(const HmsNet& net, const ParamStore& store,
                                         const std::vector<DepthSample>& data,
                                         Protocol protocol, const std::vector<double>& levels,
                                         std::uint64_t seed) {
    if (data.empty()) throw ConfigError("robustness_sweep: empty dataset");
    std::vector<SweepPoint> curve;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        const double level = levels[li];
        MetricAccumulator acc;
        for (std::size_t si = 0; si < data.size(); ++si) {
            const std::uint64_t s = mix_seed(mix_seed(seed, li), si);
            MaskedMap corrupted;
            switch (protocol) {
                case Protocol::scene_noise:
                    corrupted = corrupt_scene_noise(data[si].input, level, s);
                    break;
                case Protocol::region_noise:
                    corrupted = corrupt_region_noise(data[si].input, level, s);
                    break;
                case Protocol::sparsity:
                    corrupted = level >= 1.0 ? data[si].input : sparsify(data[si].input, level, s);
                    break;
            }
            const ForwardResult res = net.forward(corrupted, store);
            acc.add(res.prediction, data[si].gt, data[si].id);
        }
        curve.push_back({level, acc.report()});
    }
    return curve;
}

std::string sweep_to_tsv(const std::vector<SweepPoint>& curve) {
    std::ostringstream os;
    os << "level\trmse_mm\tmae_mm\tirmse_1/km\timae_1/km\trel\n";
    for (const SweepPoint& p : curve) {
        os << p.level << "\t" << fmt(p.report.rmse_mm) << "\t" << fmt(p.report.mae_mm) << "\t";
        if (p.report.inverse_ok)
            os << fmt(p.report.irmse_per_km) << "\t" << fmt(p.report.imae_per_km);
        else
            os << "nan\tnan";
        os << "\t" << fmt(p.report.rel) << "\n";
    }
    return os.str();
}

}  // namespace hms
