#include "hms/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hms/rng.hpp"

namespace hms {

namespace {

constexpr double kDepthScale = 256.0;  // stored value = depth_m * 256

int read_pnm_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments, then parses one unsigned integer.
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF)
        throw FormatError(path + ": unexpected end of header at byte " +
                          std::to_string(in.tellg()));
    std::string tok;
    while (ch != EOF && !std::isspace(ch)) {
        if (!std::isdigit(ch))
            throw FormatError(path + ": non-numeric header token at byte " +
                              std::to_string(std::streamoff(in.tellg()) - 1));
        tok.push_back(char(ch));
        ch = in.get();
    }
    return std::stoi(tok);
}

}  // namespace

MaskedMap read_depth_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5')
        throw FormatError(path + ": bad magic at byte 0 (want P5)");
    const int w = read_pnm_token(in, path);
    const int h = read_pnm_token(in, path);
    const int maxval = read_pnm_token(in, path);
    if (maxval != 65535)
        throw FormatError(path + ": maxval " + std::to_string(maxval) + " at byte " +
                          std::to_string(std::streamoff(in.tellg()) - 1) + " (want 65535)");
    if (w <= 0 || h <= 0) throw FormatError(path + ": non-positive dimensions");

    std::vector<unsigned char> raw(std::size_t(w) * std::size_t(h) * 2);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size())
        throw FormatError(path + ": truncated pixel data at byte " +
                          std::to_string(in.tellg()));

    Array3 depth(1, h, w);
    Mask2 mask(h, w);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            const std::size_t i = (std::size_t(u) * std::size_t(w) + std::size_t(v)) * 2;
            const unsigned px = unsigned(raw[i]) << 8 | unsigned(raw[i + 1]);  // big-endian
            if (px != 0) {
                depth.at(0, u, v) = real(double(px) / kDepthScale);
                mask.at(u, v) = 1;
            }
        }
    MaskedMap out;
    out.features = std::move(depth);
    out.mask = std::move(mask);
    return out;
}

void write_depth_pgm(const MaskedMap& depth, const std::string& path) {
    if (depth.channels() != 1)
        throw DimensionError("write_depth_pgm: expected 1 channel, got " +
                             std::to_string(depth.channels()));
    const int h = depth.height(), w = depth.width();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << "P5\n" << w << " " << h << "\n65535\n";
    std::vector<unsigned char> raw(std::size_t(w) * std::size_t(h) * 2, 0);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            if (depth.mask.at(u, v) == real(0)) continue;
            const double d = double(depth.features.at(0, u, v));
            long px = std::lround(d * kDepthScale);
            px = std::clamp(px, 1L, 65535L);  // stay valid and within the format ceiling
            const std::size_t i = (std::size_t(u) * std::size_t(w) + std::size_t(v)) * 2;
            raw[i] = (unsigned char)(px >> 8);
            raw[i + 1] = (unsigned char)(px & 0xff);
        }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw FormatError(path + ": write failed");
}

MaskedMap generate_scene(const SceneSpec& spec) {
    if (spec.density <= 0 || spec.density > 1)
        throw ConfigError("generate_scene: density must be in (0,1]");
    if (spec.min_depth < 1.0) throw ConfigError("generate_scene: min depth below 1 m");
    const int H = spec.height, W = spec.width;
    Rng rng(mix_seed(spec.seed, 0x7363656eULL));

    Array3 depth(1, H, W);
    const int horizon = int(std::lround(H * rng.uniform(0.08, 0.18)));
    const double near = std::max(spec.min_depth, spec.ground_near * rng.uniform(0.8, 1.2));
    const double far = spec.max_depth * spec.ground_far_frac;
    const double tilt = rng.uniform(-0.008, 0.008) * spec.max_depth;  // m per column
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v) {
            double d;
            if (u <= horizon) {
                d = far;  // far wall above the horizon
            } else {
                const double t = double(u - horizon) / double(H - 1 - horizon);
                d = far + (near - far) * t;
            }
            d += tilt * (v - W / 2);
            depth.at(0, u, v) = real(std::clamp(d, spec.min_depth, spec.max_depth));
        }

    const int n_obj = int(rng.uniform_int(spec.min_objects, spec.max_objects));
    for (int i = 0; i < n_obj; ++i) {
        const int bw = std::max(3, int(std::lround(W * rng.uniform(0.05, 0.14))));
        const int bh = std::max(3, int(std::lround(H * rng.uniform(0.06, 0.16))));
        // Boxes stand on the sloped ground below the horizon.
        const int u0 = int(rng.uniform_int(std::min(horizon + 1, H - bh), H - bh));
        const int v0 = int(rng.uniform_int(0, std::max(0, W - bw)));
        // Box sits strictly in front of the scene behind its center, with the
        // depth step scaled to the local depth so boundaries stay sharp at
        // any range setting.
        const int cu = std::min(H - 1, u0 + bh / 2), cv = std::min(W - 1, v0 + bw / 2);
        const double behind = double(depth.at(0, cu, cv));
        const double d_box = std::max(spec.min_depth,
                                      std::min(behind * rng.uniform(0.68, 0.9), behind - 0.6));
        for (int u = u0; u < std::min(H, u0 + bh); ++u)
            for (int v = v0; v < std::min(W, v0 + bw); ++v)
                if (real(d_box) < depth.at(0, u, v)) depth.at(0, u, v) = real(d_box);
    }

    Mask2 mask(H, W, real(1));
    return canonicalize(depth, mask);
}

MaskedMap sparsify(const MaskedMap& gt, double keep_prob, std::uint64_t seed) {
    if (keep_prob < 0 || keep_prob > 1) throw ConfigError("sparsify: keep probability not in [0,1]");
    Rng rng(mix_seed(seed, 0x73707273ULL));
    MaskedMap out = gt;
    for (int u = 0; u < gt.height(); ++u)
        for (int v = 0; v < gt.width(); ++v) {
            if (out.mask.at(u, v) == real(0)) continue;
            if (rng.uniform() >= keep_prob) {
                out.mask.at(u, v) = 0;
                for (int c = 0; c < out.channels(); ++c) out.features.at(c, u, v) = 0;
            }
        }
    return out;
}

MaskedMap sparsify_exact(const MaskedMap& gt, int n_keep, std::uint64_t seed) {
    if (n_keep < 0) throw ConfigError("sparsify_exact: negative count");
    Rng rng(mix_seed(seed, 0x73707278ULL));
    std::vector<int> valid;
    for (int u = 0; u < gt.height(); ++u)
        for (int v = 0; v < gt.width(); ++v)
            if (gt.mask.at(u, v) != real(0)) valid.push_back(u * gt.width() + v);
    const int keep = std::min<int>(n_keep, int(valid.size()));
    const std::vector<int> chosen = rng.sample_without_replacement(int(valid.size()), keep);
    std::vector<bool> kept(gt.mask.data.size(), false);
    for (const int i : chosen) kept[std::size_t(valid[std::size_t(i)])] = true;

    MaskedMap out = gt;
    for (int u = 0; u < gt.height(); ++u)
        for (int v = 0; v < gt.width(); ++v) {
            const std::size_t flat = std::size_t(u) * std::size_t(gt.width()) + std::size_t(v);
            if (out.mask.at(u, v) != real(0) && !kept[flat]) {
                out.mask.at(u, v) = 0;
                for (int c = 0; c < out.channels(); ++c) out.features.at(c, u, v) = 0;
            }
        }
    return out;
}

MaskedMap corrupt_scene_noise(const MaskedMap& input, double sigma, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x6e6f6973ULL));
    std::vector<int> valid;
    for (int u = 0; u < input.height(); ++u)
        for (int v = 0; v < input.width(); ++v)
            if (input.mask.at(u, v) != real(0)) valid.push_back(u * input.width() + v);
    MaskedMap out = input;
    if (valid.empty()) return out;
    const int n_noisy = int(valid.size() / 10);  // exactly floor(0.1 * |valid|)
    const std::vector<int> chosen = rng.sample_without_replacement(int(valid.size()), n_noisy);
    for (const int i : chosen) {
        const int flat = valid[std::size_t(i)];
        const int u = flat / input.width(), v = flat % input.width();
        double d = double(out.features.at(0, u, v)) + rng.normal(0.0, sigma);
        if (d < 1.0) d = 1.0;  // LIDAR minimum range
        out.features.at(0, u, v) = real(d);
    }
    return out;
}

MaskedMap corrupt_region_noise(const MaskedMap& input, double sigma, std::uint64_t seed,
                               std::vector<NoiseRegion>* report) {
    constexpr int kRegion = 25;
    constexpr int kCount = 8;
    const int H = input.height(), W = input.width();
    if (H < kRegion || W < kRegion)
        throw DimensionError("corrupt_region_noise: map (" + std::to_string(H) + "," +
                             std::to_string(W) + ") smaller than the " +
                             std::to_string(kRegion) + "x" + std::to_string(kRegion) +
                             " region");
    Rng rng(mix_seed(seed, 0x72656769ULL));
    MaskedMap out = input;
    if (report) report->clear();
    for (int r = 0; r < kCount; ++r) {
        const int u0 = int(rng.uniform_int(0, H - kRegion));
        const int v0 = int(rng.uniform_int(0, W - kRegion));
        std::vector<int> valid;
        for (int u = u0; u < u0 + kRegion; ++u)
            for (int v = v0; v < v0 + kRegion; ++v)
                if (out.mask.at(u, v) != real(0)) valid.push_back(u * W + v);
        const int n_noisy = int(valid.size() / 2);  // floor(0.5 * valid-in-region)
        const std::vector<int> chosen = rng.sample_without_replacement(int(valid.size()), n_noisy);
        for (const int i : chosen) {
            const int flat = valid[std::size_t(i)];
            const int u = flat / W, v = flat % W;
            double d = double(out.features.at(0, u, v)) + rng.normal(0.0, sigma);
            if (d < 1.0) d = 1.0;
            out.features.at(0, u, v) = real(d);
        }
        if (report) report->push_back({u0, v0, n_noisy});
    }
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open manifest");
    std::vector<ManifestEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError(path + ":" + std::to_string(lineno) + ": missing tab separator");
        entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw FormatError(path + ": cannot open for writing");
    for (const ManifestEntry& e : entries) out << e.input_path << "\t" << e.gt_path << "\n";
}

std::vector<DepthSample> load_dataset(const std::string& manifest_path) {
    const auto entries = read_manifest(manifest_path);
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    std::vector<DepthSample> data;
    data.reserve(entries.size());
    for (const ManifestEntry& e : entries) {
        DepthSample s;
        s.input = read_depth_pgm(resolve(e.input_path));
        s.gt = read_depth_pgm(resolve(e.gt_path));
        s.id = std::filesystem::path(e.input_path).stem().string();
        data.push_back(std::move(s));
    }
    return data;
}

void validate_depth_sample(const DepthSample& s, double max_range) {
    const auto check = [&](const MaskedMap& m, const char* which) {
        for (int u = 0; u < m.height(); ++u)
            for (int v = 0; v < m.width(); ++v)
                if (m.mask.at(u, v) != real(0)) {
                    const double d = double(m.features.at(0, u, v));
                    if (!(d > 0.0) || d > max_range)
                        throw IntegrityError("sample '" + s.id + "' " + which +
                                             " depth out of range: " + std::to_string(d));
                }
    };
    check(s.input, "input");
    check(s.gt, "gt");
}

}  // namespace hms
