#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hms/data_io.hpp"
#include "hms/rng.hpp"
#include "test_util.hpp"

using namespace hms;
using namespace hms::test;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    const fs::path dir = fs::temp_directory_path() / (std::string("hms_io_") + tag);
    fs::create_directories(dir);
    return dir;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pgm: declared scale and invalid-zero convention") {
    const fs::path dir = temp_dir("scale");
    MaskedMap m;
    m.features = Array3(1, 1, 2);
    m.mask = Mask2(1, 2);
    m.features.at(0, 0, 0) = 1.0;  // 1 m -> pixel 256
    m.mask.at(0, 0) = 1;           // second pixel stays invalid
    const std::string path = (dir / "a.pgm").string();
    write_depth_pgm(m, path);
    const MaskedMap back = read_depth_pgm(path);
    CHECK(back.features.at(0, 0, 0) == real(1.0));
    CHECK(back.mask.at(0, 0) == real(1));
    CHECK(back.mask.at(0, 1) == real(0));
    CHECK(back.features.at(0, 0, 1) == real(0));
}

TEST_CASE("pgm: random representable map round-trips bit exactly") {
    const fs::path dir = temp_dir("roundtrip");
    Rng rng(424242);
    const int H = 13, W = 17;
    MaskedMap m;
    m.features = Array3(1, H, W);
    m.mask = Mask2(H, W);
    for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v) {
            const unsigned px = unsigned(rng.uniform_int(0, 65535));
            if (px != 0) {
                m.features.at(0, u, v) = real(px / 256.0);
                m.mask.at(u, v) = 1;
            }
        }
    const std::string p1 = (dir / "r1.pgm").string();
    const std::string p2 = (dir / "r2.pgm").string();
    write_depth_pgm(m, p1);
    const MaskedMap back = read_depth_pgm(p1);
    CHECK(back.features.data == m.features.data);
    CHECK(back.mask.data == m.mask.data);
    write_depth_pgm(back, p2);
    CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("pgm: format errors carry a byte offset") {
    const fs::path dir = temp_dir("bad");
    const std::string bad_magic = (dir / "bad1.pgm").string();
    std::ofstream(bad_magic, std::ios::binary) << "P6\n2 2\n65535\n````````";
    CHECK_THROWS_AS(read_depth_pgm(bad_magic), FormatError);

    const std::string bad_maxval = (dir / "bad2.pgm").string();
    std::ofstream(bad_maxval, std::ios::binary) << "P5\n2 2\n255\n````";
    try {
        read_depth_pgm(bad_maxval);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }

    const std::string truncated = (dir / "bad3.pgm").string();
    std::ofstream(truncated, std::ios::binary) << "P5\n4 4\n65535\nxy";
    CHECK_THROWS_AS(read_depth_pgm(truncated), FormatError);
}

TEST_CASE("generate_scene: deterministic, in range, with depth boundaries") {
    SceneSpec spec;
    spec.seed = 31337;
    const MaskedMap a = generate_scene(spec);
    const MaskedMap b = generate_scene(spec);
    CHECK(a.features.data == b.features.data);
    CHECK(a.mask.count_valid() == std::size_t(spec.height) * std::size_t(spec.width));
    for (const real d : a.features.data) {
        CHECK(double(d) >= spec.min_depth);
        CHECK(double(d) <= spec.max_depth);
    }
    int boundary = 0;
    for (int u = 0; u < spec.height - 1; ++u)
        for (int v = 0; v < spec.width - 1; ++v) {
            if (std::abs(double(a.features.at(0, u, v)) - double(a.features.at(0, u + 1, v))) >
                0.5)
                ++boundary;
            if (std::abs(double(a.features.at(0, u, v)) - double(a.features.at(0, u, v + 1))) >
                0.5)
                ++boundary;
        }
    CHECK(boundary > 0);
}

TEST_CASE("sparsify: identity at p=1, binomial bound at p=0.5") {
    SceneSpec spec;
    spec.height = 100;
    spec.width = 100;
    spec.seed = 5;
    const MaskedMap gt = generate_scene(spec);
    const MaskedMap all = sparsify(gt, 1.0, 1);
    CHECK(all.mask.data == gt.mask.data);
    CHECK(all.features.data == gt.features.data);

    const MaskedMap half = sparsify(gt, 0.5, 2);
    const double kept = double(half.mask.count_valid()) / double(gt.mask.count_valid());
    CHECK(kept > 0.48);
    CHECK(kept < 0.52);
    CHECK(sparsify(gt, 0.5, 2).mask.data == half.mask.data);  // seeded determinism

    // Sparsification only removes validity.
    for (int u = 0; u < 100; ++u)
        for (int v = 0; v < 100; ++v)
            if (half.mask.at(u, v) != real(0)) CHECK(gt.mask.at(u, v) == real(1));
}

TEST_CASE("sparsify_exact keeps exactly n points") {
    SceneSpec spec;
    spec.seed = 6;
    const MaskedMap gt = generate_scene(spec);
    CHECK(sparsify_exact(gt, 0, 1).mask.count_valid() == 0);
    CHECK(sparsify_exact(gt, 37, 1).mask.count_valid() == 37);
    CHECK(sparsify_exact(gt, 1 << 20, 1).mask.count_valid() == gt.mask.count_valid());
}

TEST_CASE("corrupt_scene_noise: exact count, clamp, sigma-zero identity") {
    SceneSpec spec;
    spec.seed = 7;
    spec.min_depth = 5;  // keep originals clear of the 1 m clamp target
    const MaskedMap gt = generate_scene(spec);
    const MaskedMap input = sparsify(gt, 0.3, 3);

    const MaskedMap same = corrupt_scene_noise(input, 0.0, 9);
    CHECK(same.features.data == input.features.data);
    CHECK(same.mask.data == input.mask.data);

    const MaskedMap noisy = corrupt_scene_noise(input, 5.0, 9);
    CHECK(noisy.mask.data == input.mask.data);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < noisy.features.size(); ++i)
        if (noisy.features.data[i] != input.features.data[i]) ++changed;
    CHECK(changed == input.mask.count_valid() / 10);
    for (int u = 0; u < input.height(); ++u)
        for (int v = 0; v < input.width(); ++v)
            if (noisy.mask.at(u, v) != real(0)) CHECK(double(noisy.features.at(0, u, v)) >= 1.0);

    const MaskedMap empty = canonicalize(Array3(1, 8, 8), Mask2(8, 8));
    const MaskedMap still_empty = corrupt_scene_noise(empty, 5.0, 1);
    CHECK(still_empty.features.data == empty.features.data);
}

TEST_CASE("corrupt_region_noise: eight in-bounds regions with exact counts") {
    SceneSpec spec;
    spec.height = 60;
    spec.width = 48;
    spec.seed = 8;
    const MaskedMap gt = generate_scene(spec);
    const MaskedMap input = sparsify(gt, 0.4, 4);

    std::vector<NoiseRegion> regions;
    const MaskedMap noisy = corrupt_region_noise(input, 10.0, 17, &regions);
    CHECK(noisy.mask.data == input.mask.data);
    REQUIRE(regions.size() == 8);
    for (const NoiseRegion& r : regions) {
        CHECK(r.u0 >= 0);
        CHECK(r.v0 >= 0);
        CHECK(r.u0 + 25 <= 60);
        CHECK(r.v0 + 25 <= 48);
        int valid = 0;
        for (int u = r.u0; u < r.u0 + 25; ++u)
            for (int v = r.v0; v < r.v0 + 25; ++v)
                if (input.mask.at(u, v) != real(0)) ++valid;
        CHECK(r.perturbed == valid / 2);
    }
    const MaskedMap same = corrupt_region_noise(input, 0.0, 17);
    CHECK(same.features.data == input.features.data);

    CHECK_THROWS_AS(corrupt_region_noise(canonicalize(Array3(1, 20, 20), Mask2(20, 20)), 1.0, 1),
                    DimensionError);
}

TEST_CASE("manifest round trip and dataset loading") {
    const fs::path dir = temp_dir("manifest");
    SceneSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.seed = 11;
    const MaskedMap gt = generate_scene(spec);
    const MaskedMap input = sparsify(gt, 0.2, 12);
    write_depth_pgm(gt, (dir / "gt_0.pgm").string());
    write_depth_pgm(input, (dir / "in_0.pgm").string());
    write_manifest((dir / "manifest.txt").string(), {{"in_0.pgm", "gt_0.pgm"}});

    const auto entries = read_manifest((dir / "manifest.txt").string());
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].input_path == "in_0.pgm");
    CHECK(entries[0].gt_path == "gt_0.pgm");

    const auto data = load_dataset((dir / "manifest.txt").string());
    REQUIRE(data.size() == 1);
    CHECK(data[0].gt.mask.count_valid() == 256);
    CHECK(data[0].input.mask.count_valid() == input.mask.count_valid());
    validate_depth_sample(data[0]);

    std::ofstream(dir / "bad.txt") << "no_tab_here\n";
    CHECK_THROWS_AS(read_manifest((dir / "bad.txt").string()), FormatError);
}
