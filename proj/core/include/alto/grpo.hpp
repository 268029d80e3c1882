// SPDX-License-Identifier: Apache-2.0
//
// Group-relative policy optimization over sampled mask-token sequences:
// format validation, composite reward (validity + IoU - alpha * length),
// group-normalized advantages, and the clipped surrogate with a KL penalty
// against a frozen reference policy.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "alto/policy.hpp"
#include "alto/tokenizer.hpp"

namespace alto {

struct FormatResult {
    int valid = 0;                // 1 iff [START, t_1..t_L, END] with 1 <= L <= 32
    std::vector<int> extracted;   // mask tokens (best-effort on invalid input)
    int length = 0;               // extracted token count
};

/// Eq-style format check. On invalid sequences the extraction returns the
/// longest run of codebook ids after the first START (first such run wins
/// ties), possibly empty.
FormatResult validate_format(std::span<const int> seq, const Vocabulary& vocab,
                             int max_tokens = 32);

struct RewardBreakdown {
    int valid = 0;
    double iou = 0.0;
    int length = 0;
    double alpha = 0.0;
    double total = 0.0;
    double advantage = 0.0;
    bool decoder_failed = false;
};

/// Reward for one sampled sequence against the target mask. Valid samples are
/// decoded with the frozen de-tokenizer; the pixel branch receives zeros so
/// the ground truth cannot leak into the reward. Decoder failures yield -1.
template <typename S>
RewardBreakdown compute_reward(std::span<const int> seq, const MaskGrid& target,
                               double alpha, Tokenizer<S>& decoder);

/// A_i = (R_i - mean) / population std; all zero when std < 1e-8.
void normalize_advantages(std::span<RewardBreakdown> group);

/// One prompt's sampled group with rewards attached.
struct Group {
    const MaskGrid* prompt = nullptr;
    std::vector<SampledSeq> seqs;
    std::vector<RewardBreakdown> rewards;
};

struct GrpoConfig {
    double epsilon = 0.2;
    double beta = 1e-3;
    double temperature = 1.0;
    std::string kl_estimator = "k1";  // "k1": logpi - logref; "k3": exp(r)-r-1
};

struct GrpoStepStats {
    double loss = 0.0;        // minimized objective (negative surrogate + beta*KL)
    double mean_kl = 0.0;
    int skipped = 0;          // samples dropped for non-finite ratios
};

/// One ascent step on the clipped objective. Old-policy log-probs come from
/// the sampled sequences; reference log-probs are computed here against `ref`.
template <typename S>
GrpoStepStats grpo_step(Policy<S>& policy, const Policy<S>& ref, std::span<const Group> groups,
                        const GrpoConfig& cfg, Optimizer<S>& opt);

extern template RewardBreakdown compute_reward<float>(std::span<const int>, const MaskGrid&,
                                                      double, Tokenizer<float>&);
extern template RewardBreakdown compute_reward<double>(std::span<const int>, const MaskGrid&,
                                                       double, Tokenizer<double>&);
extern template GrpoStepStats grpo_step<float>(Policy<float>&, const Policy<float>&,
                                               std::span<const Group>, const GrpoConfig&,
                                               Optimizer<float>&);
extern template GrpoStepStats grpo_step<double>(Policy<double>&, const Policy<double>&,
                                                std::span<const Group>, const GrpoConfig&,
                                                Optimizer<double>&);

}  // namespace alto
