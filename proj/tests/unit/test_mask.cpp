// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "alto/mask.hpp"
#include "alto/rng.hpp"

using namespace alto;
namespace fs = std::filesystem;

namespace {

MaskGrid random_binary(int h, int w, Rng& rng, double fg = 0.4) {
    MaskGrid m(h, w);
    for (auto& v : m.values) v = rng.uniform() < fg ? 1.0f : 0.0f;
    return m;
}

fs::path temp_file(const char* name) {
    auto dir = fs::temp_directory_path() / "alto_mask_test";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("iou basics") {
    Rng rng(3);
    MaskGrid a = random_binary(16, 16, rng);
    CHECK(iou(a, a) == doctest::Approx(1.0));

    MaskGrid left(8, 8), right(8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 4; ++c) {
            left.at(r, c) = 1.0f;
            right.at(r, c + 4) = 1.0f;
        }
    CHECK(iou(left, right) == doctest::Approx(0.0));

    MaskGrid empty1(8, 8), empty2(8, 8);
    CHECK(iou(empty1, empty2) == doctest::Approx(1.0));  // convention

    MaskGrid other(4, 4);
    CHECK_THROWS_AS((void)iou(empty1, other), std::invalid_argument);
}

TEST_CASE("left half vs top half is one third") {
    MaskGrid left(64, 64), top(64, 64);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 32; ++c) left.at(r, c) = 1.0f;
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 64; ++c) top.at(r, c) = 1.0f;
    // intersection 32*32 = 1024, union 2048 + 2048 - 1024 = 3072
    CHECK(iou(left, top) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou symmetry and permutation invariance") {
    Rng rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        MaskGrid a = random_binary(12, 12, rng, 0.3 + 0.4 * rng.uniform());
        MaskGrid b = random_binary(12, 12, rng, 0.3 + 0.4 * rng.uniform());
        CHECK(iou(a, b) == doctest::Approx(iou(b, a)).epsilon(1e-15));

        std::vector<size_t> perm(a.values.size());
        std::iota(perm.begin(), perm.end(), size_t{0});
        rng.shuffle(perm);
        MaskGrid ap(12, 12), bp(12, 12);
        for (size_t i = 0; i < perm.size(); ++i) {
            ap.values[i] = a.values[perm[i]];
            bp.values[i] = b.values[perm[i]];
        }
        CHECK(iou(ap, bp) == doctest::Approx(iou(a, b)).epsilon(1e-15));
    }
}

TEST_CASE("binarize is idempotent") {
    Rng rng(8);
    MaskGrid m(10, 10);
    for (auto& v : m.values) v = static_cast<float>(rng.uniform());
    const MaskGrid b1 = binarize(m);
    const MaskGrid b2 = binarize(b1);
    CHECK(b1.values == b2.values);
}

TEST_CASE("giou and ciou") {
    SUBCASE("equal union sizes average out") {
        // two pairs with IoUs {1.0, 0.0} and equal union size 64
        MaskGrid a(16, 16), b(16, 16), c(16, 16), d(16, 16);
        for (int i = 0; i < 64; ++i) {
            a.values[static_cast<size_t>(i)] = 1.0f;
            b.values[static_cast<size_t>(i)] = 1.0f;  // identical: IoU 1, union 64
            c.values[static_cast<size_t>(i)] = 1.0f;
            d.values[static_cast<size_t>(i) + 100] = 1.0f;  // disjoint 32+32? sizes below
        }
        // make pair2 disjoint with union 64: c has 32 px, d has 32 px
        c = MaskGrid(16, 16);
        d = MaskGrid(16, 16);
        for (int i = 0; i < 32; ++i) {
            c.values[static_cast<size_t>(i)] = 1.0f;
            d.values[static_cast<size_t>(i) + 40] = 1.0f;
        }
        std::vector<std::pair<MaskGrid, MaskGrid>> pairs{{a, b}, {c, d}};
        auto rep = giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>>(pairs));
        CHECK(rep.giou == doctest::Approx(0.5));
        CHECK(rep.ciou == doctest::Approx(rep.giou));  // equal unions => equal metrics
    }
    SUBCASE("unions 100 and 300 with intersections 100 and 0") {
        MaskGrid a(20, 20), b(20, 20), c(20, 20), d(20, 20);
        for (int i = 0; i < 100; ++i) {
            a.values[static_cast<size_t>(i)] = 1.0f;
            b.values[static_cast<size_t>(i)] = 1.0f;
        }
        for (int i = 0; i < 150; ++i) {
            c.values[static_cast<size_t>(i)] = 1.0f;
            d.values[static_cast<size_t>(i) + 150] = 1.0f;
        }
        std::vector<std::pair<MaskGrid, MaskGrid>> pairs{{a, b}, {c, d}};
        auto rep = giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>>(pairs));
        CHECK(rep.giou == doctest::Approx(0.5));
        CHECK(rep.ciou == doctest::Approx(0.25));
    }
    SUBCASE("single pair: giou equals ciou equals iou") {
        Rng rng(5);
        MaskGrid a = random_binary(10, 10, rng);
        MaskGrid b = random_binary(10, 10, rng);
        std::vector<std::pair<MaskGrid, MaskGrid>> pairs{{a, b}};
        auto rep = giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>>(pairs));
        CHECK(rep.giou == doctest::Approx(iou(a, b)));
        CHECK(rep.ciou == doctest::Approx(iou(a, b)));
    }
    SUBCASE("empty list rejected") {
        std::vector<std::pair<MaskGrid, MaskGrid>> pairs;
        CHECK_THROWS_AS((void)giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>>(pairs)),
                        std::invalid_argument);
    }
}

TEST_CASE("pgm io") {
    SUBCASE("all zeros round trip") {
        MaskGrid z(64, 64);
        const auto p = temp_file("zeros.pgm");
        write_mask(p.string(), z);
        const MaskGrid r = read_mask(p.string());
        CHECK(r.values == z.values);
    }
    SUBCASE("value 0.5 maps to byte 128") {
        MaskGrid m(8, 8, 0.5f);
        const auto p = temp_file("half.pgm");
        write_mask(p.string(), m);
        std::ifstream in(p, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        CHECK(static_cast<uint8_t>(bytes.back()) == 128);
        const MaskGrid r = read_mask(p.string());
        CHECK(r.values[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-7));
    }
    SUBCASE("random binary corpus round trips bit exactly") {
        Rng rng(100);
        for (int i = 0; i < 100; ++i) {
            MaskGrid m = random_binary(16, 16, rng, rng.uniform());
            const auto p = temp_file("corpus.pgm");
            write_mask(p.string(), m);
            const MaskGrid r = read_mask(p.string());
            CHECK(binarize(r).values == binarize(m).values);
            CHECK(r.values == m.values);  // 0/1 values survive exactly
        }
    }
    SUBCASE("malformed header and truncated payload carry byte offsets") {
        const auto p = temp_file("bad.pgm");
        std::ofstream(p, std::ios::binary) << "P6\n8 8\n255\n";
        CHECK_THROWS_WITH_AS((void)read_mask(p.string()),
                             doctest::Contains("byte offset 0"), std::invalid_argument);

        std::ofstream(p, std::ios::binary | std::ios::trunc) << "P5\n8 8\n255\nabc";
        try {
            (void)read_mask(p.string());
            FAIL("expected throw");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
            CHECK(std::string(e.what()).find("offset") != std::string::npos);
        }
    }
    SUBCASE("out of range values rejected on write") {
        MaskGrid m(4, 4, 2.0f);
        CHECK_THROWS_AS(write_mask(temp_file("bad2.pgm").string(), m), std::invalid_argument);
    }
}

TEST_CASE("spearman handles ties and monotone data") {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y{2, 4, 6, 8, 10};
    CHECK(spearman(x, y) == doctest::Approx(1.0));
    std::vector<double> yr{10, 8, 6, 4, 2};
    CHECK(spearman(x, yr) == doctest::Approx(-1.0));
    std::vector<double> ties{1, 1, 2, 2, 3};
    CHECK(spearman(ties, ties) == doctest::Approx(1.0));
}
