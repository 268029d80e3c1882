// SPDX-License-Identifier: Apache-2.0
#include "alto/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace alto {

void PolicyConfig::validate() const {
    require(codebook >= 1, "policy: empty codebook vocabulary");
    require(d > 0 && heads > 0 && d % heads == 0, "policy: embed dim ", d,
            " must be divisible by heads ", heads);
    require(blocks >= 1, "policy: need at least one block");
    require(max_mask_tokens >= 1, "policy: max_mask_tokens must be >= 1");
    require(grid >= 8 && patch > 0 && grid % patch == 0, "policy: patch ", patch,
            " must divide grid ", grid);
}

template <typename S>
Policy<S>::Policy(const PolicyConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    const int d = cfg_.d;
    maskenc_w_ = &params_.add_xavier("policy.maskenc.w", cfg_.patch * cfg_.patch, d, rng);
    maskenc_b_ = &params_.add("policy.maskenc.b", Shape::vec(d));
    embed_ = &params_.add_normal("policy.embed", Shape::mat(cfg_.vocab_size(), d), rng, 0.02);
    pos_ = &params_.add_normal("policy.pos", Shape::mat(cfg_.max_positions(), d), rng, 0.02);
    for (int b = 0; b < cfg_.blocks; ++b)
        blocks_.push_back(TransformerBlock<S>::create(params_, str_cat("policy.blk", b), d,
                                                      cfg_.heads, rng));
    lnf_g_ = &params_.add("policy.lnf.g", Shape::vec(d));
    std::fill(lnf_g_->value.begin(), lnf_g_->value.end(), S(1));
    lnf_b_ = &params_.add("policy.lnf.b", Shape::vec(d));
    head_w_ = &params_.add_xavier("policy.head.w", d, cfg_.vocab_size(), rng);
    head_b_ = &params_.add("policy.head.b", Shape::vec(cfg_.vocab_size()));
}

template <typename S>
Policy<S> Policy<S>::clone() const {
    Policy<S> c(cfg_, 0);
    for (size_t i = 0; i < params_.size(); ++i) c.params_.at(i).value = params_.at(i).value;
    return c;
}

namespace {

template <typename S>
std::vector<S> patchify_grid(const MaskGrid& mask, int patch) {
    const int side = mask.height / patch;
    std::vector<S> out(static_cast<size_t>(side) * side * patch * patch);
    size_t k = 0;
    for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc)
            for (int r = 0; r < patch; ++r)
                for (int c = 0; c < patch; ++c)
                    out[k++] = static_cast<S>(mask.at(pr * patch + r, pc * patch + c));
    return out;
}

}  // namespace

template <typename S>
Tensor<S> Policy<S>::forward_logits(Tape<S>& tape, const MaskGrid& prompt,
                                    std::span<const int> tokens, bool with_grad) {
    require(prompt.height == cfg_.grid && prompt.width == cfg_.grid,
            "policy: prompt mask is ", prompt.height, "x", prompt.width,
            ", configured grid is ", cfg_.grid);
    const int n = static_cast<int>(tokens.size());
    require(n + 1 <= cfg_.max_positions(), "policy: sequence of ", n,
            " tokens exceeds position table ", cfg_.max_positions());
    for (int id : tokens)
        require(id >= 0 && id < cfg_.vocab_size(), "policy: token id ", id, " out of range");

    const std::vector<S> patches = patchify_grid<S>(prompt, cfg_.patch);
    const int np = (cfg_.grid / cfg_.patch) * (cfg_.grid / cfg_.patch);
    Tensor<S> pxc = tape.constant(Shape::mat(np, cfg_.patch * cfg_.patch),
                                  std::span<const S>(patches));
    Tensor<S> pooled = mean_rows(add(matmul(pxc, tape.param(*maskenc_w_, with_grad)),
                                     tape.param(*maskenc_b_, with_grad)));
    Tensor<S> prefix = reshape(pooled, Shape::mat(1, cfg_.d));

    Tensor<S> x;
    if (n > 0) {
        Tensor<S> emb = embedding(tape.param(*embed_, with_grad), tokens);
        x = concat_rows({prefix, emb});
    } else {
        x = prefix;
    }
    x = add(x, slice_rows(tape.param(*pos_, with_grad), 0, n + 1));

    const std::vector<S> mask = causal_mask<S>(n + 1);
    for (const auto& blk : blocks_) x = blk.forward(tape, x, with_grad, &mask);
    x = layer_norm(x, tape.param(*lnf_g_, with_grad), tape.param(*lnf_b_, with_grad));
    return add(matmul(x, tape.param(*head_w_, with_grad)), tape.param(*head_b_, with_grad));
}

// ---------------------------------------------------------------------------
// value path (sampling / reference scoring)
// ---------------------------------------------------------------------------

namespace {

template <typename S>
void vlinear(const Param<S>& W, const Param<S>& bias, std::span<const S> x,
             std::vector<S>& out) {
    const int din = W.shape.rows(), dout = W.shape.cols();
    out.assign(static_cast<size_t>(dout), S(0));
    for (int k = 0; k < din; ++k) {
        const S xv = x[static_cast<size_t>(k)];
        const S* w = W.value.data() + static_cast<size_t>(k) * dout;
        for (int j = 0; j < dout; ++j) out[static_cast<size_t>(j)] += xv * w[j];
    }
    for (int j = 0; j < dout; ++j) out[static_cast<size_t>(j)] += bias.value[static_cast<size_t>(j)];
}

template <typename S>
void vlayernorm(const Param<S>& g, const Param<S>& b, std::span<const S> x,
                std::vector<S>& out) {
    const int n = static_cast<int>(x.size());
    out.resize(static_cast<size_t>(n));
    S mean = 0;
    for (S v : x) mean += v;
    mean /= static_cast<S>(n);
    S var = 0;
    for (S v : x) var += (v - mean) * (v - mean);
    var /= static_cast<S>(n);
    const S isd = S(1) / std::sqrt(var + static_cast<S>(1e-5));
    for (int i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = g.value[static_cast<size_t>(i)] * (x[static_cast<size_t>(i)] - mean) * isd +
                                      b.value[static_cast<size_t>(i)];
}

template <typename S>
void value_block_step(const TransformerBlock<S>& blk, std::vector<S>& x,
                      std::vector<S>& kcache, std::vector<S>& vcache) {
    const int d = blk.d, heads = blk.heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<S> h, q, k, v;
    vlayernorm(*blk.ln1_g, *blk.ln1_b, std::span<const S>(x), h);
    vlinear(*blk.wq, *blk.bq, std::span<const S>(h), q);
    vlinear(*blk.wk, *blk.bk, std::span<const S>(h), k);
    vlinear(*blk.wv, *blk.bv, std::span<const S>(h), v);
    kcache.insert(kcache.end(), k.begin(), k.end());
    vcache.insert(vcache.end(), v.begin(), v.end());
    const int T = static_cast<int>(kcache.size()) / d;

    std::vector<S> att(static_cast<size_t>(d), S(0));
    std::vector<S> sc(static_cast<size_t>(T));
    for (int hd = 0; hd < heads; ++hd) {
        const int off = hd * dh;
        S mx = std::numeric_limits<S>::lowest();
        for (int t = 0; t < T; ++t) {
            S dot = 0;
            const S* kt = kcache.data() + static_cast<size_t>(t) * d + off;
            for (int j = 0; j < dh; ++j) dot += q[static_cast<size_t>(off + j)] * kt[j];
            sc[static_cast<size_t>(t)] = dot * static_cast<S>(scale);
            mx = std::max(mx, sc[static_cast<size_t>(t)]);
        }
        S sumw = 0;
        for (int t = 0; t < T; ++t) {
            sc[static_cast<size_t>(t)] = std::exp(sc[static_cast<size_t>(t)] - mx);
            sumw += sc[static_cast<size_t>(t)];
        }
        for (int j = 0; j < dh; ++j) {
            S acc = 0;
            for (int t = 0; t < T; ++t)
                acc += sc[static_cast<size_t>(t)] * vcache[static_cast<size_t>(t) * d + off + j];
            att[static_cast<size_t>(off + j)] = acc / sumw;
        }
    }
    std::vector<S> y;
    vlinear(*blk.wo, *blk.bo, std::span<const S>(att), y);
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += y[static_cast<size_t>(j)];

    std::vector<S> h2, gate, val;
    vlayernorm(*blk.ln2_g, *blk.ln2_b, std::span<const S>(x), h2);
    vlinear(*blk.mlp_wg, *blk.mlp_bg, std::span<const S>(h2), gate);
    vlinear(*blk.mlp_wv, *blk.mlp_bv, std::span<const S>(h2), val);
    for (size_t j = 0; j < gate.size(); ++j) {
        const S s = S(1) / (S(1) + std::exp(-gate[j]));
        gate[j] = gate[j] * s * val[j];
    }
    std::vector<S> mlp;
    vlinear(*blk.mlp_wo, *blk.mlp_bo, std::span<const S>(gate), mlp);
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += mlp[static_cast<size_t>(j)];
}

}  // namespace

template <typename T>
struct RolloutDetail {
    const Policy<T>* pol;
    std::vector<std::vector<T>> kcache, vcache;
    std::vector<T> logits;
    int t = 0;

    explicit RolloutDetail(const Policy<T>& p) : pol(&p) {
        kcache.resize(p.blocks_.size());
        vcache.resize(p.blocks_.size());
    }

    void feed(std::vector<T> x) {
        for (size_t b = 0; b < pol->blocks_.size(); ++b)
            value_block_step(pol->blocks_[b], x, kcache[b], vcache[b]);
        std::vector<T> h;
        vlayernorm(*pol->lnf_g_, *pol->lnf_b_, std::span<const T>(x), h);
        vlinear(*pol->head_w_, *pol->head_b_, std::span<const T>(h), logits);
        ++t;
    }

    void feed_prefix(const MaskGrid& prompt) {
        std::vector<T> x = pol->prefix_value(prompt);
        const int d = pol->config().d;
        for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += pol->pos_->value[static_cast<size_t>(j)];
        feed(std::move(x));
    }

    void feed_token(int id) {
        const int d = pol->config().d;
        std::vector<T> x(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j)
            x[static_cast<size_t>(j)] = pol->embed_->value[static_cast<size_t>(id) * d + j] +
                                        pol->pos_->value[static_cast<size_t>(t) * d + j];
        feed(std::move(x));
    }
};

template <typename S>
std::vector<S> Policy<S>::prefix_value(const MaskGrid& prompt) const {
    require(prompt.height == cfg_.grid && prompt.width == cfg_.grid,
            "policy: prompt mask is ", prompt.height, "x", prompt.width,
            ", configured grid is ", cfg_.grid);
    const std::vector<S> patches = patchify_grid<S>(prompt, cfg_.patch);
    const int np = (cfg_.grid / cfg_.patch) * (cfg_.grid / cfg_.patch);
    const int pp = cfg_.patch * cfg_.patch;
    std::vector<S> pooled(static_cast<size_t>(cfg_.d), S(0));
    std::vector<S> row;
    for (int i = 0; i < np; ++i) {
        vlinear(*maskenc_w_, *maskenc_b_,
                std::span<const S>(patches.data() + static_cast<size_t>(i) * pp, static_cast<size_t>(pp)), row);
        for (int j = 0; j < cfg_.d; ++j) pooled[static_cast<size_t>(j)] += row[static_cast<size_t>(j)];
    }
    for (auto& v : pooled) v /= static_cast<S>(np);
    return pooled;
}

namespace {

// log-softmax (double precision) of logits/temperature at one index,
// plus the full-distribution entropy.
struct DistStats {
    std::vector<double> logp;
    double entropy = 0.0;
};

template <typename S>
DistStats dist_stats(const std::vector<S>& logits, double temperature) {
    DistStats out;
    const size_t n = logits.size();
    out.logp.resize(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i)
        mx = std::max(mx, static_cast<double>(logits[i]) / temperature);
    double sum = 0;
    for (size_t i = 0; i < n; ++i) {
        out.logp[i] = static_cast<double>(logits[i]) / temperature - mx;
        sum += std::exp(out.logp[i]);
    }
    const double lse = std::log(sum);
    for (size_t i = 0; i < n; ++i) {
        out.logp[i] -= lse;
        const double p = std::exp(out.logp[i]);
        if (p > 0) out.entropy -= p * out.logp[i];
    }
    return out;
}

}  // namespace

template <typename S>
SampledSeq sample_sequence(const Policy<S>& policy, const MaskGrid& prompt,
                           double temperature, int top_k, Rng& rng) {
    const PolicyConfig& cfg = policy.config();
    const Vocabulary vocab = cfg.vocab();
    const bool greedy = temperature <= 0.0 || top_k == 1;
    const double book_temp = temperature > 0.0 ? temperature : 1.0;
    const int vocab_n = cfg.vocab_size();
    const int k_eff = top_k <= 0 ? vocab_n : std::min(top_k, vocab_n);

    RolloutDetail<S> roll(policy);
    roll.feed_prefix(prompt);

    SampledSeq seq;
    int code_count = 0;
    const int action_cap = cfg.max_mask_tokens + 2;
    double entropy_acc = 0.0;

    while (true) {
        const DistStats stats = dist_stats(roll.logits, book_temp);
        int action;
        if (greedy) {
            action = 0;
            for (int i = 1; i < vocab_n; ++i)
                if (roll.logits[static_cast<size_t>(i)] > roll.logits[static_cast<size_t>(action)]) action = i;
        } else {
            std::vector<int> order(static_cast<size_t>(vocab_n));
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (roll.logits[static_cast<size_t>(a)] != roll.logits[static_cast<size_t>(b)])
                    return roll.logits[static_cast<size_t>(a)] > roll.logits[static_cast<size_t>(b)];
                return a < b;
            });
            double total = 0;
            for (int i = 0; i < k_eff; ++i) total += std::exp(stats.logp[static_cast<size_t>(order[static_cast<size_t>(i)])]);
            const double u = rng.uniform() * total;
            double acc = 0;
            action = order[static_cast<size_t>(k_eff - 1)];
            for (int i = 0; i < k_eff; ++i) {
                acc += std::exp(stats.logp[static_cast<size_t>(order[static_cast<size_t>(i)])]);
                if (u < acc) {
                    action = order[static_cast<size_t>(i)];
                    break;
                }
            }
        }

        seq.actions.push_back(action);
        seq.tokens.push_back(action);
        seq.logp_tok.push_back(stats.logp[static_cast<size_t>(action)]);
        seq.logp_sum += stats.logp[static_cast<size_t>(action)];
        entropy_acc += stats.entropy;

        if (action == vocab.end_id()) break;
        if (vocab.is_code(action)) ++code_count;
        if (code_count >= cfg.max_mask_tokens ||
            static_cast<int>(seq.actions.size()) >= action_cap) {
            seq.tokens.push_back(vocab.end_id());  // forced, not an action
            seq.forced_end = true;
            break;
        }
        roll.feed_token(action);
    }
    seq.mean_entropy = entropy_acc / static_cast<double>(seq.actions.size());
    return seq;
}

template <typename S>
std::vector<double> score_sequence(const Policy<S>& policy, const MaskGrid& prompt,
                                   std::span<const int> actions, double temperature) {
    require(!actions.empty(), "score_sequence: empty action sequence");
    const double book_temp = temperature > 0.0 ? temperature : 1.0;
    RolloutDetail<S> roll(policy);
    roll.feed_prefix(prompt);
    std::vector<double> out;
    out.reserve(actions.size());
    for (size_t i = 0; i < actions.size(); ++i) {
        const DistStats stats = dist_stats(roll.logits, book_temp);
        out.push_back(stats.logp[static_cast<size_t>(actions[i])]);
        if (i + 1 < actions.size()) roll.feed_token(actions[i]);
    }
    return out;
}

template class Policy<float>;
template class Policy<double>;
template SampledSeq sample_sequence<float>(const Policy<float>&, const MaskGrid&, double, int,
                                           Rng&);
template SampledSeq sample_sequence<double>(const Policy<double>&, const MaskGrid&, double,
                                            int, Rng&);
template std::vector<double> score_sequence<float>(const Policy<float>&, const MaskGrid&,
                                                   std::span<const int>, double);
template std::vector<double> score_sequence<double>(const Policy<double>&, const MaskGrid&,
                                                    std::span<const int>, double);

}  // namespace alto
