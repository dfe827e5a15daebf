#include "doctest.h"
#include "hms/array.hpp"
#include "hms/gradcheck.hpp"
#include "test_util.hpp"

using namespace hms;
using namespace hms::test;

TEST_CASE("canonicalize masks out invalid features") {
    const Array3 x = array_1ch({{5, 7}, {9, 3}});
    const Mask2 m = mask_of({{1, 0}, {0, 1}});
    const MaskedMap p = canonicalize(x, m);
    CHECK(p.features.at(0, 0, 0) == real(5));
    CHECK(p.features.at(0, 0, 1) == real(0));
    CHECK(p.features.at(0, 1, 0) == real(0));
    CHECK(p.features.at(0, 1, 1) == real(3));
    CHECK(p.is_canonical());
}

TEST_CASE("canonicalize identity and annihilation cases") {
    const Array3 x = array_1ch({{1, 2}, {3, 4}});
    const MaskedMap all = canonicalize(x, mask_of({{1, 1}, {1, 1}}));
    CHECK(all.features.data == x.data);
    const MaskedMap none = canonicalize(x, mask_of({{0, 0}, {0, 0}}));
    for (const real v : none.features.data) CHECK(v == real(0));
    CHECK(none.mask.count_valid() == 0);
}

TEST_CASE("canonicalize rejects mismatched shapes, naming both") {
    const Array3 x(1, 2, 3);
    const Mask2 m(2, 2);
    try {
        canonicalize(x, m);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(1,2,3)") != std::string::npos);
        CHECK(msg.find("(2,2)") != std::string::npos);
    }
}

TEST_CASE("canonicalize is idempotent") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const MaskedMap p = random_masked_map(3, 6, 4, 0.5, s);
        const MaskedMap again = canonicalize(p.features, p.mask);
        CHECK(bitwise_equal(p, again));
        CHECK(again.mask.is_binary());
    }
}

TEST_CASE("canonicalize never reads garbage at invalid locations") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const MaskedMap p = random_masked_map(2, 5, 5, 0.4, s);
        const MaskedMap garbage = with_garbage(p, s);
        const MaskedMap cleaned = canonicalize(garbage.features, garbage.mask);
        CHECK(bitwise_equal(p, cleaned));
        CHECK(cleaned.features.all_finite());
    }
}

TEST_CASE("elementwise arithmetic") {
    const Array3 a = array_1ch({{1, 2}});
    const Array3 b = array_1ch({{3, 4}});
    const Array3 sum = elementwise_add(a, b);
    CHECK(sum.at(0, 0, 0) == real(4));
    CHECK(sum.at(0, 0, 1) == real(6));
    const Array3 prod = elementwise_mul(a, b);
    CHECK(prod.at(0, 0, 0) == real(3));
    CHECK(prod.at(0, 0, 1) == real(8));
    CHECK_THROWS_AS(elementwise_add(a, Array3(1, 2, 2)), DimensionError);
}

TEST_CASE("eps-guarded division") {
    CHECK(std::abs(double(div_eps(4, 2, real(1e-8))) - 2.0) < 1e-7);
    CHECK(div_eps(0, 0, real(1e-8)) == real(0));
    const Array3 num = array_1ch({{4, 0}});
    const Array3 den = array_1ch({{2, 0}});
    const Array3 q = elementwise_div_eps(num, den, real(1e-8));
    CHECK(std::abs(double(q.at(0, 0, 0)) - 2.0) < 1e-7);
    CHECK(q.at(0, 0, 1) == real(0));
}
