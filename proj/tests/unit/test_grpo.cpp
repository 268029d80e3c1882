// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "alto/grpo.hpp"

using namespace alto;

namespace {

const Vocabulary kVocab{256};
constexpr int kStart = 256;
constexpr int kEnd = 257;

PolicyConfig bandit_policy() {
    PolicyConfig c;
    c.codebook = 2;
    c.d = 16;
    c.blocks = 1;
    c.heads = 2;
    c.max_mask_tokens = 1;
    c.grid = 8;
    c.patch = 8;
    return c;
}

TokenizerConfig tiny_decoder() {
    TokenizerConfig c;
    c.grid = 16;
    c.patch = 8;
    c.d = 16;
    c.blocks = 1;
    c.heads = 2;
    c.codebook = 32;
    return c;
}

}  // namespace

TEST_CASE("format validation") {
    SUBCASE("well formed") {
        const std::vector<int> seq{kStart, 5, 9, kEnd};
        const auto fr = validate_format(std::span<const int>(seq), kVocab);
        CHECK(fr.valid == 1);
        CHECK(fr.length == 2);
        CHECK(fr.extracted == std::vector<int>{5, 9});
    }
    SUBCASE("empty body violates the length range") {
        const std::vector<int> seq{kStart, kEnd};
        const auto fr = validate_format(std::span<const int>(seq), kVocab);
        CHECK(fr.valid == 0);
        CHECK(fr.length == 0);
    }
    SUBCASE("missing start gives empty extraction") {
        const std::vector<int> seq{5, 9, kEnd};
        const auto fr = validate_format(std::span<const int>(seq), kVocab);
        CHECK(fr.valid == 0);
        CHECK(fr.extracted.empty());
    }
    SUBCASE("over-long body is invalid") {
        std::vector<int> seq{kStart};
        for (int i = 0; i < 33; ++i) seq.push_back(1);
        seq.push_back(kEnd);
        const auto fr = validate_format(std::span<const int>(seq), kVocab);
        CHECK(fr.valid == 0);
        CHECK(fr.length == 33);  // best-effort run
    }
    SUBCASE("best effort picks the longest run after the first start") {
        const std::vector<int> seq{7, kStart, 5, kEnd, 8, 9, 10, kStart, 2};
        const auto fr = validate_format(std::span<const int>(seq), kVocab);
        CHECK(fr.valid == 0);
        CHECK(fr.extracted == std::vector<int>{8, 9, 10});
        CHECK(fr.length == 3);
    }
    SUBCASE("pure function: same verdict on repeat calls") {
        const std::vector<int> seq{kStart, 1, 2, 3, kEnd};
        const auto a = validate_format(std::span<const int>(seq), kVocab);
        const auto b = validate_format(std::span<const int>(seq), kVocab);
        CHECK(a.valid == b.valid);
        CHECK(a.extracted == b.extracted);
    }
}

TEST_CASE("reward formula") {
    Tokenizer<float> tok(tiny_decoder(), 19);
    MaskGrid target(16, 16);
    for (int r = 4; r < 12; ++r)
        for (int c = 4; c < 12; ++c) target.at(r, c) = 1.0f;

    SUBCASE("valid sample follows validity + iou - alpha * length") {
        std::vector<int> seq{32 /*start*/};
        for (int i = 0; i < 16; ++i) seq.push_back(i % 32);
        seq.push_back(33 /*end*/);
        const Vocabulary v{32};
        REQUIRE(validate_format(std::span<const int>(seq), v).valid == 1);

        const auto r0 = compute_reward(std::span<const int>(seq), target, 0.0, tok);
        CHECK(r0.valid == 1);
        CHECK(r0.length == 16);
        CHECK(r0.total == doctest::Approx(1.0 + r0.iou).epsilon(1e-12));  // alpha 0

        const auto r1 = compute_reward(std::span<const int>(seq), target, 0.01, tok);
        CHECK(r1.iou == doctest::Approx(r0.iou));  // deterministic decode
        CHECK(r1.total == doctest::Approx(1.0 + r1.iou - 0.01 * 16).epsilon(1e-12));
        // formula anchor: iou 0.8, L 16, alpha 0.01 would score 1.64
        RewardBreakdown anchor;
        anchor.valid = 1;
        anchor.iou = 0.8;
        anchor.length = 16;
        CHECK(1.0 + anchor.iou - 0.01 * anchor.length == doctest::Approx(1.64));
    }

    SUBCASE("invalid sample keeps the length penalty only") {
        const std::vector<int> seq{32, 1, 2, 3};  // no END
        const auto r = compute_reward(std::span<const int>(seq), target, 0.01, tok);
        CHECK(r.valid == 0);
        CHECK(r.iou == 0.0);
        CHECK(r.length == 3);
        CHECK(r.total == doctest::Approx(-0.03));
    }

    SUBCASE("alpha must be non-negative") {
        const std::vector<int> seq{32, 1, 33};
        CHECK_THROWS_AS((void)compute_reward(std::span<const int>(seq), target, -0.5, tok),
                        std::invalid_argument);
    }

    SUBCASE("reward is strictly decreasing in length for fixed validity and iou") {
        for (int L = 1; L < 32; ++L) {
            const double a = 1.0 + 0.5 - 0.01 * L;
            const double b = 1.0 + 0.5 - 0.01 * (L + 1);
            CHECK(a > b);
        }
    }
}

TEST_CASE("group advantage normalization") {
    SUBCASE("rewards one two three") {
        std::vector<RewardBreakdown> g(3);
        g[0].total = 1.0;
        g[1].total = 2.0;
        g[2].total = 3.0;
        normalize_advantages(std::span<RewardBreakdown>(g));
        CHECK(std::abs(g[0].advantage + 1.2247) < 1e-4);
        CHECK(std::abs(g[1].advantage) < 1e-9);
        CHECK(std::abs(g[2].advantage - 1.2247) < 1e-4);
        const double sum = g[0].advantage + g[1].advantage + g[2].advantage;
        double var = 0;
        for (const auto& r : g) var += r.advantage * r.advantage;
        CHECK(std::abs(sum) < 1e-6);
        CHECK(std::abs(std::sqrt(var / 3.0) - 1.0) < 1e-6);  // population std one
    }
    SUBCASE("zero spread yields zero advantages") {
        std::vector<RewardBreakdown> g(4);
        for (auto& r : g) r.total = 0.75;
        normalize_advantages(std::span<RewardBreakdown>(g));
        for (const auto& r : g) CHECK(r.advantage == 0.0);
    }
    SUBCASE("groups below two are rejected") {
        std::vector<RewardBreakdown> g(1);
        CHECK_THROWS_AS(normalize_advantages(std::span<RewardBreakdown>(g)),
                        std::invalid_argument);
    }
}

TEST_CASE("grpo step mechanics") {
    Policy<double> pol(bandit_policy(), 3);
    const MaskGrid prompt(8, 8, 0.0f);
    Rng rng(5);

    // sample a group and store old log-probs from the tape path so the
    // first-update ratio is exactly one
    Group g;
    g.prompt = &prompt;
    for (int i = 0; i < 4; ++i)
        g.seqs.push_back(sample_sequence(pol, prompt, 1.0, 4, rng));
    for (auto& seq : g.seqs) {
        Tape<double> tape;
        Tensor<double> logits = pol.forward_logits(tape, prompt,
                                                   std::span<const int>(seq.actions), false);
        Tensor<double> lp = gather_cols(
            log_softmax(slice_rows(logits, 0, static_cast<int>(seq.actions.size()))),
            std::span<const int>(seq.actions));
        seq.logp_sum = static_cast<double>(sum(lp).item());
    }
    g.rewards.resize(g.seqs.size());

    SUBCASE("ratio one: loss equals minus the mean advantage") {
        for (size_t i = 0; i < g.rewards.size(); ++i)
            g.rewards[i].advantage = static_cast<double>(i) - 1.5;
        GrpoConfig cfg;
        cfg.beta = 0.0;
        Optimizer<double> opt(OptimizerConfig{OptKind::sgd, 0.0});  // no movement
        std::vector<Group> groups;
        groups.push_back(g);
        const auto stats = grpo_step(pol, pol, std::span<const Group>(groups), cfg, opt);
        double mean_adv = 0;
        for (const auto& r : g.rewards) mean_adv += r.advantage;
        mean_adv /= static_cast<double>(g.rewards.size());
        CHECK(stats.loss == doctest::Approx(-mean_adv).epsilon(1e-9));
        CHECK(stats.skipped == 0);
    }

    SUBCASE("zero advantages and zero beta leave the policy untouched") {
        for (auto& r : g.rewards) r.advantage = 0.0;
        GrpoConfig cfg;
        cfg.beta = 0.0;
        Optimizer<double> opt(OptimizerConfig{OptKind::adam, 1e-2});
        const auto before = pol.params().snapshot_values();
        std::vector<Group> groups;
        groups.push_back(g);
        (void)grpo_step(pol, pol, std::span<const Group>(groups), cfg, opt);
        const auto after = pol.params().snapshot_values();
        for (size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
    }

    SUBCASE("reference policy is immutable through a step") {
        Policy<double> ref = pol.clone();
        const auto ref_before = ref.params().snapshot_values();
        for (size_t i = 0; i < g.rewards.size(); ++i)
            g.rewards[i].advantage = i % 2 == 0 ? 1.0 : -1.0;
        GrpoConfig cfg;
        cfg.beta = 1e-3;
        Optimizer<double> opt(OptimizerConfig{OptKind::adam, 1e-2});
        std::vector<Group> groups;
        groups.push_back(g);
        (void)grpo_step(pol, ref, std::span<const Group>(groups), cfg, opt);
        const auto ref_after = ref.params().snapshot_values();
        for (size_t i = 0; i < ref_before.size(); ++i) CHECK(ref_before[i] == ref_after[i]);
        // the optimized policy did move
        bool moved = false;
        const auto now = pol.params().snapshot_values();
        for (size_t i = 0; i < now.size(); ++i)
            if (now[i] != ref_before[i]) moved = true;
        CHECK(moved);
    }

    SUBCASE("epsilon and estimator names are validated") {
        GrpoConfig cfg;
        cfg.epsilon = 1.5;
        Optimizer<double> opt;
        std::vector<Group> groups;
        groups.push_back(g);
        CHECK_THROWS_AS((void)grpo_step(pol, pol, std::span<const Group>(groups), cfg, opt),
                        std::invalid_argument);
        cfg.epsilon = 0.2;
        cfg.kl_estimator = "k9";
        CHECK_THROWS_AS((void)grpo_step(pol, pol, std::span<const Group>(groups), cfg, opt),
                        std::invalid_argument);
    }
}

TEST_CASE("surrogate contribution is bounded by (1+eps)|A|") {
    Rng rng(31);
    const double eps = 0.2;
    for (int trial = 0; trial < 1000; ++trial) {
        const double ratio = std::exp(rng.normal(0.0, 1.5));
        const double A = rng.normal(0.0, 2.0);
        const double clipped = std::min(std::max(ratio, 1.0 - eps), 1.0 + eps);
        const double surr = std::min(ratio * A, clipped * A);
        CHECK(surr <= (1.0 + eps) * std::abs(A) + 1e-12);
    }
}

TEST_CASE("two-action bandit concentrates on the rewarded action") {
    Policy<double> pol(bandit_policy(), 21);
    const MaskGrid prompt(8, 8, 0.0f);
    const Vocabulary vocab = pol.vocab();
    Rng rng(99);
    GrpoConfig cfg;
    cfg.beta = 0.0;
    cfg.epsilon = 0.2;
    Optimizer<double> opt(OptimizerConfig{OptKind::adam, 2e-2});

    double p_good = 0.0;
    int steps_needed = -1;
    for (int step = 1; step <= 200; ++step) {
        Group g;
        g.prompt = &prompt;
        for (int i = 0; i < 8; ++i)
            g.seqs.push_back(sample_sequence(pol, prompt, 1.0, 4, rng));
        g.rewards.resize(g.seqs.size());
        for (size_t i = 0; i < g.seqs.size(); ++i) {
            const auto fr = validate_format(std::span<const int>(g.seqs[i].tokens), vocab, 1);
            g.rewards[i].total =
                (fr.valid == 1 && fr.length == 1 && fr.extracted[0] == 0) ? 1.0 : 0.0;
        }
        normalize_advantages(std::span<RewardBreakdown>(g.rewards));
        std::vector<Group> groups;
        groups.push_back(std::move(g));
        (void)grpo_step(pol, pol, std::span<const Group>(groups), cfg, opt);

        const std::vector<int> good{vocab.start_id(), 0};
        const auto lp = score_sequence(pol, prompt, std::span<const int>(good), 1.0);
        p_good = std::exp(lp[1]);  // P(token 0 | START)
        if (p_good >= 0.9) {
            steps_needed = step;
            break;
        }
    }
    CHECK_MESSAGE(p_good >= 0.9, "bandit reached only p=", p_good);
    CHECK(steps_needed <= 200);
}
