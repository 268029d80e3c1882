// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <filesystem>

#include "alto/train.hpp"

using namespace alto;
namespace fs = std::filesystem;

namespace {

TokenizerConfig small_config() {
    TokenizerConfig c;
    c.grid = 32;
    c.patch = 8;
    c.d = 32;
    c.blocks = 1;
    c.heads = 4;
    c.codebook = 64;
    return c;
}

std::vector<LoadedSample> small_data(uint64_t seed, int n) {
    return to_loaded(generate_dataset(seed, n, 32, 3));
}

}  // namespace

TEST_CASE("stage1 loss trends down and reruns are bit identical in f64") {
    const auto data = small_data(5, 24);
    Stage1Config cfg;
    cfg.epochs = 5;
    cfg.batch = 4;
    cfg.seed = 11;
    cfg.eval_subset = 8;

    Tokenizer<double> tok_a(small_config(), 11);
    const auto a = train_stage1(tok_a, data, {}, cfg, nullptr);
    REQUIRE(a.history.size() == 5);
    CHECK(a.history[4].loss < a.history[0].loss);

    Tokenizer<double> tok_b(small_config(), 11);
    const auto b = train_stage1(tok_b, data, {}, cfg, nullptr);
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss == b.history[i].loss);  // bitwise determinism
        CHECK(a.history[i].giou_k32 == b.history[i].giou_k32);
    }
    for (size_t i = 0; i < tok_a.params().size(); ++i)
        CHECK(tok_a.params().at(i).value == tok_b.params().at(i).value);
}

TEST_CASE("stage15 trains only the predictor and freezes the tokenizer") {
    const auto data = small_data(6, 16);
    Tokenizer<float> tok(small_config(), 3);
    Stage1Config s1;
    s1.epochs = 2;
    s1.batch = 4;
    s1.seed = 3;
    s1.eval_subset = 4;
    (void)train_stage1(tok, data, {}, s1, nullptr);

    LengthPredictorConfig lc;
    lc.d = 32;
    LengthPredictor<float> lp(lc, 3);
    const auto tok_before = tok.params().snapshot_values();
    const auto lp_before = lp.params().snapshot_values();

    Stage15Config cfg;
    cfg.epochs = 2;
    cfg.batch = 4;
    cfg.lambda = 1e-2;
    cfg.seed = 3;
    cfg.eval_subset = 8;
    const auto result = train_stage15(tok, lp, data, {}, cfg, nullptr);
    REQUIRE(result.history.size() == 2);

    const auto tok_after = tok.params().snapshot_values();
    for (size_t i = 0; i < tok_before.size(); ++i) CHECK(tok_before[i] == tok_after[i]);
    bool lp_moved = false;
    const auto lp_after = lp.params().snapshot_values();
    for (size_t i = 0; i < lp_before.size(); ++i)
        if (lp_before[i] != lp_after[i]) lp_moved = true;
    CHECK(lp_moved);
}

TEST_CASE("stage15 with zero lambda exerts no length pressure") {
    const auto data = small_data(7, 16);
    Tokenizer<float> tok(small_config(), 4);
    Stage1Config s1;
    s1.epochs = 2;
    s1.batch = 4;
    s1.seed = 4;
    s1.eval_subset = 4;
    (void)train_stage1(tok, data, {}, s1, nullptr);

    LengthPredictorConfig lc;
    lc.d = 32;
    LengthPredictor<float> lp(lc, 4);
    Stage15Config cfg;
    cfg.epochs = 3;
    cfg.batch = 4;
    cfg.lambda = 0.0;
    cfg.seed = 4;
    cfg.eval_subset = 16;
    const auto result = train_stage15(tok, lp, data, {}, cfg, nullptr);
    // without pressure the mean stays in the interior, nowhere near collapse
    CHECK(result.history.back().mean_len > 8.0);
}

TEST_CASE("fixed evaluation always spends 32 tokens, adaptive at most 32") {
    const auto data = small_data(8, 8);
    Tokenizer<float> tok(small_config(), 5);
    auto fixed = evaluate_reconstruction(tok, nullptr, data, EvalMode::fixed);
    CHECK(fixed.mean_len == 32.0);
    for (double k : fixed.keeps) CHECK(k == 32.0);

    LengthPredictorConfig lc;
    lc.d = 32;
    LengthPredictor<float> lp(lc, 5);
    auto adaptive = evaluate_reconstruction(tok, &lp, data, EvalMode::adaptive);
    CHECK(adaptive.mean_len <= 32.0);
    CHECK(adaptive.l_hats.size() == data.size());
    CHECK_THROWS_AS((void)evaluate_reconstruction(tok, nullptr, data, EvalMode::adaptive),
                    std::invalid_argument);
}

TEST_CASE("tokenizer checkpoints round trip through the container") {
    Tokenizer<float> tok(small_config(), 6);
    LengthPredictorConfig lc;
    lc.d = 32;
    LengthPredictor<float> lp(lc, 6);
    const auto dir = fs::temp_directory_path() / "alto_train_test";
    fs::create_directories(dir);
    const std::string path = (dir / "ckpt.alto").string();

    SUBCASE("without the predictor") {
        save_tokenizer_checkpoint<float>(path, tok, nullptr);
        auto loaded = load_tokenizer_checkpoint<float>(path);
        CHECK(loaded.length_predictor == nullptr);
        CHECK(loaded.config.grid == 32);
        CHECK(loaded.config.codebook == 64);
        for (size_t i = 0; i < tok.params().size(); ++i)
            CHECK(loaded.tokenizer->params().at(i).value == tok.params().at(i).value);
    }
    SUBCASE("with the predictor appended under tlp names") {
        save_tokenizer_checkpoint<float>(path, tok, &lp);
        const auto entries = read_checkpoint(path);
        CHECK(find_entry(entries, "tlp.Wv") != nullptr);
        CHECK(find_entry(entries, "tlp.Wg") != nullptr);
        CHECK(find_entry(entries, "tlp.Wq") != nullptr);
        auto loaded = load_tokenizer_checkpoint<float>(path);
        REQUIRE(loaded.length_predictor != nullptr);
        for (size_t i = 0; i < lp.params().size(); ++i)
            CHECK(loaded.length_predictor->params().at(i).value == lp.params().at(i).value);
    }
}

TEST_CASE("stage3 smoke run logs the documented metrics") {
    const auto data = small_data(9, 8);
    Tokenizer<float> tok(small_config(), 7);
    PolicyConfig pc;
    pc.codebook = tok.config().codebook;
    pc.d = 32;
    pc.blocks = 1;
    pc.heads = 4;
    pc.max_mask_tokens = 32;
    pc.grid = 32;
    pc.patch = 8;
    Policy<float> policy(pc, 7);

    Stage3Config cfg;
    cfg.steps = 4;
    cfg.group_size = 4;
    cfg.prompts_per_step = 2;
    cfg.seed = 7;
    const auto result = train_stage3(policy, tok, data, cfg, nullptr);
    REQUIRE(result.history.size() == 4);
    for (const auto& row : result.history) {
        CHECK(row.mean_len >= 0.0);
        CHECK(row.frac_valid >= 0.0);
        CHECK(row.frac_valid <= 1.0);
        CHECK(std::isfinite(row.entropy));
        CHECK(std::isfinite(row.mean_reward));
    }
}

TEST_CASE("stage3 rerun with the same seed is bit identical in f64") {
    const auto data = small_data(10, 6);
    auto run = [&]() {
        Tokenizer<double> tok(small_config(), 8);
        PolicyConfig pc;
        pc.codebook = tok.config().codebook;
        pc.d = 32;
        pc.blocks = 1;
        pc.heads = 4;
        pc.grid = 32;
        pc.patch = 8;
        Policy<double> policy(pc, 8);
        Stage3Config cfg;
        cfg.steps = 3;
        cfg.group_size = 4;
        cfg.prompts_per_step = 2;
        cfg.seed = 8;
        return train_stage3(policy, tok, data, cfg, nullptr);
    };
    const auto a = run();
    const auto b = run();
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].mean_reward == b.history[i].mean_reward);
        CHECK(a.history[i].mean_len == b.history[i].mean_len);
        CHECK(a.history[i].entropy == b.history[i].entropy);
    }
}
