// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "alto/tokenizer.hpp"
#include "alto/train.hpp"

using namespace alto;

namespace {

TokenizerConfig tiny_config() {
    TokenizerConfig c;
    c.grid = 16;
    c.patch = 8;  // 4 patches
    c.d = 16;
    c.blocks = 1;
    c.heads = 2;
    c.codebook = 64;
    c.px_pool = 4;
    return c;
}

MaskGrid const_mask(int grid, float v) { return MaskGrid(grid, grid, v); }

}  // namespace

TEST_CASE("encode is deterministic and returns the configured shapes") {
    Tokenizer<double> tok(tiny_config(), 11);
    MaskGrid m = const_mask(16, 0.0f);
    m.at(3, 4) = 1.0f;
    m.at(9, 12) = 1.0f;

    Tape<double> t1, t2;
    auto e1 = tok.encode(t1, m, false);
    auto e2 = tok.encode(t2, m, false);
    CHECK(e1.t_pre.shape() == Shape::mat(32, 16));
    CHECK(e1.t_cls.shape() == Shape::vec(16));
    CHECK(std::vector<double>(e1.t_pre.val().begin(), e1.t_pre.val().end()) ==
          std::vector<double>(e2.t_pre.val().begin(), e2.t_pre.val().end()));

    MaskGrid wrong(8, 8);
    Tape<double> t3;
    CHECK_THROWS_AS((void)tok.encode(t3, wrong, false), std::invalid_argument);
}

TEST_CASE("latent token budget is pinned at 32") {
    TokenizerConfig c = tiny_config();
    c.n_latent = 16;
    CHECK_THROWS_AS((void)Tokenizer<float>(c, 1), std::invalid_argument);
}

TEST_CASE("vq quantization contract") {
    SUBCASE("rows already in the codebook quantize to themselves with zero loss") {
        Tokenizer<double> tok(tiny_config(), 3);
        Param<double>* cb = tok.params().find("vq.codebook");
        REQUIRE(cb != nullptr);
        // t_pre := first 32 codebook rows, exactly
        std::vector<double> tp(cb->value.begin(), cb->value.begin() + 32 * 16);
        Tape<double> tape;
        Tensor<double> t_pre = tape.leaf(Shape::mat(32, 16), std::span<const double>(tp));
        auto q = tok.quantize(tape, t_pre, false);
        for (int i = 0; i < 32; ++i) CHECK(q.indices[static_cast<size_t>(i)] == i);
        CHECK(q.vq_loss.item() == doctest::Approx(0.0).epsilon(1e-15));
        // bit equality against codebook rows
        for (int i = 0; i < 32 * 16; ++i)
            CHECK(q.tokens.val()[static_cast<size_t>(i)] == cb->value[static_cast<size_t>(i)]);
    }

    SUBCASE("equidistant entries break ties toward the lowest index") {
        Tokenizer<double> tok(tiny_config(), 3);
        Param<double>* cb = tok.params().find("vq.codebook");
        std::fill(cb->value.begin(), cb->value.end(), 100.0);  // push everything far away
        const int d = 16;
        // entries 3 and 7: unit distance from the origin row in one coordinate
        for (int j = 0; j < d; ++j) {
            cb->value[3 * d + j] = 0.0;
            cb->value[7 * d + j] = 0.0;
        }
        cb->value[3 * d + 0] = 1.0;
        cb->value[7 * d + 0] = -1.0;
        std::vector<double> tp(32 * d, 0.0);  // all rows at the origin
        Tape<double> tape;
        Tensor<double> t_pre = tape.leaf(Shape::mat(32, d), std::span<const double>(tp));
        auto q = tok.quantize(tape, t_pre, false);
        for (int i = 0; i < 32; ++i) CHECK(q.indices[static_cast<size_t>(i)] == 3);
    }

    SUBCASE("quantized rows are bit-equal to codebook rows on random input") {
        Tokenizer<float> tok(tiny_config(), 5);
        Rng rng(8);
        std::vector<float> tp(32 * 16);
        for (auto& v : tp) v = static_cast<float>(rng.normal());
        Tape<float> tape;
        Tensor<float> t_pre = tape.leaf(Shape::mat(32, 16), std::span<const float>(tp));
        auto q = tok.quantize(tape, t_pre, false);
        const Param<float>* cb = tok.params().find("vq.codebook");
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 16; ++j)
                CHECK(q.tokens.val()[static_cast<size_t>(i * 16 + j)] ==
                      cb->value[static_cast<size_t>(q.indices[static_cast<size_t>(i)] * 16 + j)]);
    }

    SUBCASE("empty codebook is rejected at construction") {
        TokenizerConfig c = tiny_config();
        c.codebook = 0;
        CHECK_THROWS_AS((void)Tokenizer<float>(c, 1), std::invalid_argument);
    }
}

TEST_CASE("straight-through gradient equals the identity-path gradient") {
    // Place the codebook exactly on t_pre so decode sees the same point on
    // both routes, then compare the ST analytic gradient of the quantized
    // path with finite differences of the identity path.
    Tokenizer<double> tok(tiny_config(), 17);
    Rng rng(23);
    const int d = 16;
    ParamStore<double> store;
    Param<double>& t_pre = store.add("t_pre", Shape::mat(32, d));
    for (auto& v : t_pre.value) v = rng.normal();
    Param<double>* cb = tok.params().find("vq.codebook");
    std::fill(cb->value.begin(), cb->value.end(), 1000.0);
    std::copy(t_pre.value.begin(), t_pre.value.end(), cb->value.begin());

    MaskGrid target(16, 16, 0.0f);
    for (int r = 4; r < 12; ++r)
        for (int c = 4; c < 12; ++c) target.at(r, c) = 1.0f;

    auto eval_st = [&](bool with_grad) {
        Tape<double> tape;
        Tensor<double> tp = tape.param(t_pre);
        auto q = tok.quantize(tape, tp, false);
        Tensor<double> pred = tok.decode(tape, q.tokens, &target, false);
        Tensor<double> loss = mse(pred, tok.gt_patches(tape, target));
        if (with_grad) tape.backward(loss);
        return static_cast<double>(loss.item());
    };
    auto eval_id = [&]() {
        Tape<double> tape;
        Tensor<double> tp = tape.param(t_pre);
        Tensor<double> pred = tok.decode(tape, tp, &target, false);
        Tensor<double> loss = mse(pred, tok.gt_patches(tape, target));
        return static_cast<double>(loss.item());
    };

    t_pre.zero_grad();
    const double f0 = eval_st(true);
    CHECK(std::isfinite(f0));
    const std::vector<double> analytic = t_pre.grad;

    const double h = 1e-6;
    double max_rel = 0.0;
    for (size_t k = 0; k < t_pre.value.size(); k += 7) {  // stride keeps it quick
        const double orig = t_pre.value[k];
        t_pre.value[k] = orig + h;
        const double fp = eval_id();
        t_pre.value[k] = orig - h;
        const double fm = eval_id();
        t_pre.value[k] = orig;
        const double num = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(num), std::abs(analytic[k]), 1e-8});
        max_rel = std::max(max_rel, std::abs(num - analytic[k]) / denom);
    }
    CHECK_MESSAGE(max_rel < 1e-5, "st vs identity rel err ", max_rel);
}

TEST_CASE("decode basics") {
    Tokenizer<float> tok(tiny_config(), 29);
    std::vector<float> zeros(32 * 16, 0.0f);

    SUBCASE("all-zero tokens on an untrained net stay in [0,1]") {
        Tape<float> tape;
        Tensor<float> t = tape.constant(Shape::mat(32, 16), std::span<const float>(zeros));
        Tensor<float> out = tok.decode(tape, t, nullptr, false);
        for (float v : out.val()) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }

    SUBCASE("keep equal to 32 is a padding no-op") {
        Rng rng(31);
        std::vector<float> tv(32 * 16);
        for (auto& v : tv) v = static_cast<float>(rng.normal());
        MaskGrid m(16, 16, 0.25f);
        Tape<float> tape;
        Tensor<float> t = tape.constant(Shape::mat(32, 16), std::span<const float>(tv));
        std::vector<float> ones(32, 1.0f);
        Tensor<float> all = tape.constant(Shape::vec(32), std::span<const float>(ones));
        Tensor<float> padded = scale_rows(t, all);
        Tensor<float> a = tok.decode(tape, t, &m, false);
        Tensor<float> b = tok.decode(tape, padded, &m, false);
        for (size_t i = 0; i < a.val().size(); ++i) CHECK(a.val()[i] == b.val()[i]);
    }

    SUBCASE("non-finite tokens are rejected") {
        Tape<float> tape;
        std::vector<float> bad(32 * 16, 0.0f);
        bad[5] = std::numeric_limits<float>::infinity();
        Tensor<float> t = tape.constant(Shape::mat(32, 16), std::span<const float>(bad));
        CHECK_THROWS_AS((void)tok.decode(tape, t, nullptr, false), std::invalid_argument);
    }
}

TEST_CASE("dead codebook entries are reseeded from donors") {
    Tokenizer<float> tok(tiny_config(), 41);
    tok.reset_codebook_usage();
    Rng rng(2);
    std::vector<float> tp(32 * 16);
    for (auto& v : tp) v = static_cast<float>(rng.normal());
    Tape<float> tape;
    (void)tok.quantize(tape, tape.leaf(Shape::mat(32, 16), std::span<const float>(tp)), false);
    int used = 0;
    for (int64_t u : tok.codebook_usage()) used += u > 0 ? 1 : 0;
    CHECK(used <= 32);
    std::vector<std::vector<float>> donors{std::vector<float>(16, 0.5f)};
    const int reseeded = tok.reseed_dead_entries(donors, rng);
    CHECK(reseeded == 64 - used);
}

TEST_CASE("training separates the CLS feature of distinct masks") {
    // two-sample dataset: all zeros vs all ones, one hundred steps
    std::vector<LoadedSample> data;
    data.push_back(LoadedSample{0, const_mask(16, 0.0f), 0, 0.0});
    data.push_back(LoadedSample{1, const_mask(16, 1.0f), 1, 1.0});

    Tokenizer<float> tok(tiny_config(), 7);
    Stage1Config cfg;
    cfg.epochs = 50;  // 2 samples => 100 steps
    cfg.batch = 1;
    cfg.seed = 7;
    cfg.eval_subset = 2;
    (void)train_stage1(tok, data, data, cfg, nullptr);

    Tape<float> tape;
    auto e0 = tok.encode(tape, data[0].mask, false);
    auto e1 = tok.encode(tape, data[1].mask, false);
    double dist = 0;
    for (size_t i = 0; i < e0.t_cls.val().size(); ++i) {
        const double diff = e0.t_cls.val()[i] - e1.t_cls.val()[i];
        dist += diff * diff;
    }
    CHECK(std::sqrt(dist) > 1e-3);
}
