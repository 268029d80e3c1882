// SPDX-License-Identifier: Apache-2.0
#include "alto/grpo.hpp"

#include <cmath>

namespace alto {

FormatResult validate_format(std::span<const int> seq, const Vocabulary& vocab,
                             int max_tokens) {
    FormatResult out;
    const int n = static_cast<int>(seq.size());

    bool strict = n >= 3 && seq[0] == vocab.start_id() && seq[static_cast<size_t>(n - 1)] == vocab.end_id();
    if (strict) {
        for (int i = 1; i < n - 1; ++i)
            if (!vocab.is_code(seq[static_cast<size_t>(i)])) {
                strict = false;
                break;
            }
        const int L = n - 2;
        if (L < 1 || L > max_tokens) strict = false;
        if (strict) {
            out.valid = 1;
            out.extracted.assign(seq.begin() + 1, seq.end() - 1);
            out.length = L;
            return out;
        }
    }

    // best effort: longest run of codebook ids after the first START
    int start_pos = -1;
    for (int i = 0; i < n; ++i)
        if (seq[static_cast<size_t>(i)] == vocab.start_id()) {
            start_pos = i;
            break;
        }
    if (start_pos >= 0) {
        int best_begin = -1, best_len = 0;
        int run_begin = -1, run_len = 0;
        for (int i = start_pos + 1; i <= n; ++i) {
            const bool code = i < n && vocab.is_code(seq[static_cast<size_t>(i)]);
            if (code) {
                if (run_len == 0) run_begin = i;
                ++run_len;
            } else {
                if (run_len > best_len) {
                    best_len = run_len;
                    best_begin = run_begin;
                }
                run_len = 0;
            }
        }
        if (best_len > 0)
            out.extracted.assign(seq.begin() + best_begin, seq.begin() + best_begin + best_len);
    }
    out.length = static_cast<int>(out.extracted.size());
    return out;
}

template <typename S>
RewardBreakdown compute_reward(std::span<const int> seq, const MaskGrid& target, double alpha,
                               Tokenizer<S>& decoder) {
    require(alpha >= 0.0, "reward: alpha must be non-negative, got ", alpha);
    const TokenizerConfig& cfg = decoder.config();
    const FormatResult fr = validate_format(seq, Vocabulary{cfg.codebook}, cfg.n_latent);

    RewardBreakdown rb;
    rb.valid = fr.valid;
    rb.length = fr.length;
    rb.alpha = alpha;
    if (!fr.valid) {
        rb.total = -alpha * static_cast<double>(fr.length);
        return rb;
    }

    try {
        const int d = cfg.d;
        const Param<S>* cb = decoder.params().find("vq.codebook");
        std::vector<S> rows(static_cast<size_t>(cfg.n_latent) * d, S(0));
        for (int i = 0; i < fr.length && i < cfg.n_latent; ++i) {
            const int id = fr.extracted[static_cast<size_t>(i)];
            std::copy_n(cb->value.data() + static_cast<size_t>(id) * d, d,
                        rows.data() + static_cast<size_t>(i) * d);
        }
        Tape<S> tape;
        Tensor<S> tokens = tape.constant(Shape::mat(cfg.n_latent, d), std::span<const S>(rows));
        Tensor<S> pred = decoder.decode(tape, tokens, nullptr, /*with_grad=*/false);
        const MaskGrid pred_mask = decoder.mask_from_patches(pred.val());
        rb.iou = iou(pred_mask, target);
    } catch (const std::exception&) {
        rb.decoder_failed = true;
        rb.total = -1.0;
        return rb;
    }
    rb.total = 1.0 + rb.iou - alpha * static_cast<double>(rb.length);
    return rb;
}

void normalize_advantages(std::span<RewardBreakdown> group) {
    require(group.size() >= 2, "normalize_advantages: group size must be >= 2, got ",
            group.size());
    double mean = 0.0;
    for (const auto& r : group) mean += r.total;
    mean /= static_cast<double>(group.size());
    double var = 0.0;
    for (const auto& r : group) var += (r.total - mean) * (r.total - mean);
    var /= static_cast<double>(group.size());  // population variance
    const double sd = std::sqrt(var);
    for (auto& r : group) r.advantage = sd < 1e-8 ? 0.0 : (r.total - mean) / sd;
}

template <typename S>
GrpoStepStats grpo_step(Policy<S>& policy, const Policy<S>& ref, std::span<const Group> groups,
                        const GrpoConfig& cfg, Optimizer<S>& opt) {
    require(cfg.epsilon > 0.0 && cfg.epsilon < 1.0, "grpo_step: epsilon must be in (0,1), got ",
            cfg.epsilon);
    require(cfg.beta >= 0.0, "grpo_step: beta must be non-negative, got ", cfg.beta);
    require(cfg.kl_estimator == "k1" || cfg.kl_estimator == "k3",
            "grpo_step: unknown kl_estimator ", cfg.kl_estimator);
    const double inv_temp = 1.0 / (cfg.temperature > 0.0 ? cfg.temperature : 1.0);

    GrpoStepStats stats;
    Tape<S> tape;
    Tensor<S> total;
    int used = 0;
    double kl_acc = 0.0;

    for (const Group& g : groups) {
        require(g.seqs.size() == g.rewards.size(), "grpo_step: rewards missing for group");
        for (size_t i = 0; i < g.seqs.size(); ++i) {
            const SampledSeq& seq = g.seqs[i];
            const double adv = g.rewards[i].advantage;
            const int n = static_cast<int>(seq.actions.size());

            Tensor<S> logits = policy.forward_logits(tape, *g.prompt,
                                                     std::span<const int>(seq.actions), true);
            Tensor<S> rows = slice_rows(logits, 0, n);
            if (inv_temp != 1.0) rows = smul(rows, inv_temp);
            Tensor<S> lp_tok = gather_cols(log_softmax(rows), std::span<const int>(seq.actions));
            Tensor<S> seq_lp = sum(lp_tok);
            Tensor<S> ratio = exp_op(sadd(seq_lp, -seq.logp_sum));
            if (!std::isfinite(static_cast<double>(ratio.item()))) {
                ++stats.skipped;  // nodes stay on the tape but contribute nothing
                continue;
            }
            Tensor<S> surr = min_op(smul(ratio, adv),
                                    smul(clamp_op(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon), adv));

            Tensor<S> sample_loss = smul(surr, -1.0);
            if (cfg.beta > 0.0) {
                const std::vector<double> ref_lp =
                    score_sequence(ref, *g.prompt, std::span<const int>(seq.actions),
                                   cfg.temperature);
                std::vector<S> ref_s(ref_lp.begin(), ref_lp.end());
                Tensor<S> ref_c = tape.constant(Shape::vec(n), std::span<const S>(ref_s));
                Tensor<S> kl;
                if (cfg.kl_estimator == "k1") {
                    kl = mean(sub(lp_tok, ref_c));
                } else {  // k3: exp(r) - r - 1 with r = logref - logpi
                    Tensor<S> r = sub(ref_c, lp_tok);
                    kl = mean(sadd(sub(exp_op(r), r), -1.0));
                }
                kl_acc += static_cast<double>(kl.item());
                sample_loss = add(sample_loss, smul(kl, cfg.beta));
            }
            total = total.defined() ? add(total, sample_loss) : sample_loss;
            ++used;
        }
    }

    if (used == 0) return stats;
    Tensor<S> loss = smul(total, 1.0 / static_cast<double>(used));
    stats.loss = static_cast<double>(loss.item());
    stats.mean_kl = kl_acc / static_cast<double>(used);
    policy.params().zero_grads();
    tape.backward(loss);
    opt.step(policy.params());
    return stats;
}

template RewardBreakdown compute_reward<float>(std::span<const int>, const MaskGrid&, double,
                                               Tokenizer<float>&);
template RewardBreakdown compute_reward<double>(std::span<const int>, const MaskGrid&, double,
                                                Tokenizer<double>&);
template GrpoStepStats grpo_step<float>(Policy<float>&, const Policy<float>&,
                                        std::span<const Group>, const GrpoConfig&,
                                        Optimizer<float>&);
template GrpoStepStats grpo_step<double>(Policy<double>&, const Policy<double>&,
                                         std::span<const Group>, const GrpoConfig&,
                                         Optimizer<double>&);

}  // namespace alto
