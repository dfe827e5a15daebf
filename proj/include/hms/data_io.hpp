#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hms/array.hpp"

namespace hms {

// One training/evaluation item: sparse input depth and (denser) ground
// truth, both in meters with validity masks, features shaped 1 x H x W.
struct DepthSample {
    MaskedMap input;
    MaskedMap gt;
    std::string id;
};

// Synthetic scene parameters: a sloped ground plane plus fronto-parallel
// boxes, standing in for captured LIDAR data at desk scale.
struct SceneSpec {
    int height = 64;
    int width = 64;
    std::uint64_t seed = 0;
    double min_depth = 1.0;    // meters
    double max_depth = 100.0;  // meters
    double ground_near = 3.0;  // depth at the bottom row
    double ground_far_frac = 0.9;  // horizon depth as a fraction of max_depth
    int min_objects = 2;
    int max_objects = 6;
    double density = 0.05;  // keep probability when sparsifying
};

// 16-bit binary PGM, maxval 65535, stored value = depth_m * 256, 0 = invalid.
// Values beyond the representable ceiling saturate at 65535 on write.
MaskedMap read_depth_pgm(const std::string& path);
void write_depth_pgm(const MaskedMap& depth, const std::string& path);

// Dense ground-truth depth, deterministic per seed. Boxes are strictly
// nearer than what they occlude, so depth boundaries always exist.
MaskedMap generate_scene(const SceneSpec& spec);

// Bernoulli(p) keep per valid pixel; dropped pixels become invalid zeros.
MaskedMap sparsify(const MaskedMap& gt, double keep_prob, std::uint64_t seed);

// Keeps exactly n valid pixels, sampled uniformly without replacement.
MaskedMap sparsify_exact(const MaskedMap& gt, int n_keep, std::uint64_t seed);

// Additive zero-mean Gaussian noise on exactly floor(0.1 * |valid|) points,
// results below 1 m clamped to 1 m; the mask is unchanged.
MaskedMap corrupt_scene_noise(const MaskedMap& input, double sigma, std::uint64_t seed);

struct NoiseRegion {
    int u0 = 0, v0 = 0;     // top-left corner
    int perturbed = 0;      // points selected in this region
};
// Eight 25x25 regions, fully inside the map and possibly overlapping; in
// each, floor(0.5 * valid-in-region) points get Gaussian noise, 1 m clamp.
MaskedMap corrupt_region_noise(const MaskedMap& input, double sigma, std::uint64_t seed,
                               std::vector<NoiseRegion>* report = nullptr);

// Dataset manifest: one "input_path<TAB>gt_path" line per sample.
struct ManifestEntry {
    std::string input_path;
    std::string gt_path;
};
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<DepthSample> load_dataset(const std::string& manifest_path);

// Valid depths must be positive and within the declared range.
void validate_depth_sample(const DepthSample& s, double max_range = 256.0);

}  // namespace hms
