// SPDX-License-Identifier: Apache-2.0
//
// Small causal transformer policy over the mask-token vocabulary, conditioned
// on a learned embedding of the target mask (prefix token). Two forward
// paths: a tape-based one for optimization and a value-only KV-cached one for
// sampling and reference scoring.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "alto/mask.hpp"
#include "alto/optim.hpp"
#include "alto/transformer.hpp"

namespace alto {

/// Codebook token ids 0..K-1 plus <ALTo_Start> (= K) and <ALTo_End> (= K+1).
struct Vocabulary {
    int codebook = 256;

    int start_id() const { return codebook; }
    int end_id() const { return codebook + 1; }
    int size() const { return codebook + 2; }
    bool is_code(int id) const { return id >= 0 && id < codebook; }
};

struct PolicyConfig {
    int codebook = 256;
    int d = 64;
    int blocks = 2;
    int heads = 4;
    int max_mask_tokens = 32;  // forced <ALTo_End> after this many code tokens
    int grid = 64;
    int patch = 8;

    Vocabulary vocab() const { return Vocabulary{codebook}; }
    int vocab_size() const { return codebook + 2; }
    /// prefix + (max_mask_tokens + 2) sampled tokens
    int max_positions() const { return max_mask_tokens + 3; }
    void validate() const;
};

template <typename S>
class Policy {
public:
    Policy(const PolicyConfig& cfg, uint64_t init_seed);

    Policy(Policy&&) noexcept = default;
    Policy& operator=(Policy&&) noexcept = default;

    const PolicyConfig& config() const { return cfg_; }
    Vocabulary vocab() const { return cfg_.vocab(); }
    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    /// Teacher-forced logits: rows 0..n-1 predict tokens[0..n-1], row n
    /// predicts the continuation. Row 0 is conditioned on the mask prefix.
    Tensor<S> forward_logits(Tape<S>& tape, const MaskGrid& prompt,
                             std::span<const int> tokens, bool with_grad);

    /// Deep copy (reference-policy snapshot).
    Policy<S> clone() const;

    // value-path internals used by sampling/scoring
    std::vector<S> prefix_value(const MaskGrid& prompt) const;

private:
    PolicyConfig cfg_;
    ParamStore<S> params_;

    Param<S>*maskenc_w_, *maskenc_b_, *embed_, *pos_, *lnf_g_, *lnf_b_, *head_w_, *head_b_;
    std::vector<TransformerBlock<S>> blocks_;

    template <typename T>
    friend struct RolloutDetail;
};

/// One sampled response. `actions` are the tokens the policy actually drew;
/// `tokens` additionally contains a forced <ALTo_End> when the cap fired.
struct SampledSeq {
    std::vector<int> tokens;
    std::vector<int> actions;
    bool forced_end = false;
    double logp_sum = 0.0;             // sum of per-action log-probs at sampling time
    std::vector<double> logp_tok;      // per action, pre-truncation distribution
    double mean_entropy = 0.0;         // mean per-position entropy of that distribution
};

/// Ancestral sampling with temperature and top-k truncation. temperature <= 0
/// selects greedy decoding (log-probs are then recorded at temperature 1).
template <typename S>
SampledSeq sample_sequence(const Policy<S>& policy, const MaskGrid& prompt,
                           double temperature, int top_k, Rng& rng);

/// Per-action log-probs of a fixed action sequence under the policy
/// (value path; used for reference-policy scoring).
template <typename S>
std::vector<double> score_sequence(const Policy<S>& policy, const MaskGrid& prompt,
                                   std::span<const int> actions, double temperature);

extern template class Policy<float>;
extern template class Policy<double>;
extern template SampledSeq sample_sequence<float>(const Policy<float>&, const MaskGrid&,
                                                  double, int, Rng&);
extern template SampledSeq sample_sequence<double>(const Policy<double>&, const MaskGrid&,
                                                   double, int, Rng&);
extern template std::vector<double> score_sequence<float>(const Policy<float>&,
                                                          const MaskGrid&,
                                                          std::span<const int>, double);
extern template std::vector<double> score_sequence<double>(const Policy<double>&,
                                                           const MaskGrid&,
                                                           std::span<const int>, double);

}  // namespace alto
