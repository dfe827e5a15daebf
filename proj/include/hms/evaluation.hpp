#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hms/data_io.hpp"
#include "hms/network.hpp"

namespace hms {

struct SampleMetrics {
    std::string id;
    std::size_t valid_count = 0;
    double rmse_mm = 0;
    double mae_mm = 0;
    double irmse_per_km = 0;  // meaningful only when inverse_ok
    double imae_per_km = 0;
    double rel = 0;
    bool inverse_ok = true;
    std::size_t nonpositive_pred = 0;  // prediction <= 0 at ground-truth pixels
};

struct MetricReport {
    double rmse_mm = 0;
    double mae_mm = 0;
    double irmse_per_km = 0;
    double imae_per_km = 0;
    double rel = 0;
    std::size_t valid_count = 0;
    bool inverse_ok = true;            // false if any sample had nonpositive predictions
    std::size_t nonpositive_pred = 0;
    std::vector<SampleMetrics> per_sample;

    std::string to_table() const;
    std::string to_tsv_line() const;  // rmse mae irmse imae rel count
};

// Pools valid pixels across samples so the dataset-level metrics follow the
// same per-pixel normalization as a single map.
class MetricAccumulator {
public:
    void add(const Array3& pred_m, const MaskedMap& gt, const std::string& id = "");
    MetricReport report() const;

private:
    double se_ = 0, ae_ = 0, ise_ = 0, iae_ = 0, rel_ = 0;
    std::size_t n_ = 0, bad_ = 0;
    std::vector<SampleMetrics> samples_;
};

MetricReport compute_metrics(const Array3& pred_m, const MaskedMap& gt);

// Every pixel takes the depth of its nearest valid input pixel (Euclidean
// distance; ties prefer the smaller row, then the smaller column).
Array3 nn_fill_baseline(const MaskedMap& input);

enum class Protocol { scene_noise, region_noise, sparsity };
Protocol protocol_from_string(const std::string& s);

struct SweepPoint {
    double level = 0;
    MetricReport report;
};

// Evaluates a fixed trained model under increasing corruption; parameters
// are never touched. Levels are sigmas (noise) or keep fractions (sparsity).
std::vector<SweepPoint> robustness_sweep(const HmsNet& net, const ParamStore& store,
                                         const std::vector<DepthSample>& data,
                                         Protocol protocol, const std::vector<double>& levels,
                                         std::uint64_t seed);

std::string sweep_to_tsv(const std::vector<SweepPoint>& curve);

}  // namespace hms
