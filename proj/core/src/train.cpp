// SPDX-License-Identifier: Apache-2.0
#include "alto/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "alto/model_io.hpp"

namespace alto {

namespace {

template <typename S>
std::vector<S> keep_vector(int n_tokens, int keep) {
    std::vector<S> v(static_cast<size_t>(n_tokens), S(0));
    for (int i = 0; i < keep && i < n_tokens; ++i) v[static_cast<size_t>(i)] = S(1);
    return v;
}

template <typename S>
struct CachedTokens {
    std::vector<S> tokens;  // n_latent x d quantized rows
    std::vector<S> t_cls;   // d
};

template <typename S>
CachedTokens<S> encode_cached(Tokenizer<S>& tok, const MaskGrid& mask) {
    Tape<S> tape;
    auto enc = tok.encode(tape, mask, /*with_grad=*/false);
    auto q = tok.quantize(tape, enc.t_pre, /*with_grad=*/false);
    CachedTokens<S> out;
    out.tokens.assign(q.tokens.val().begin(), q.tokens.val().end());
    out.t_cls.assign(enc.t_cls.val().begin(), enc.t_cls.val().end());
    return out;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------- stage 1

template <typename S>
static double stage1_giou_at_keep(Tokenizer<S>& tok, const std::vector<LoadedSample>& samples,
                                  int limit, int keep) {
    std::vector<std::pair<MaskGrid, MaskGrid>> pairs;
    const int n = std::min<int>(limit, static_cast<int>(samples.size()));
    for (int i = 0; i < n; ++i) {
        Tape<S> tape;
        auto enc = tok.encode(tape, samples[static_cast<size_t>(i)].mask, false);
        auto q = tok.quantize(tape, enc.t_pre, false);
        const std::vector<S> kv = keep_vector<S>(tok.config().n_latent, keep);
        Tensor<S> kvt = tape.constant(Shape::vec(tok.config().n_latent), std::span<const S>(kv));
        Tensor<S> kept = scale_rows(q.tokens, kvt);
        Tensor<S> pred = tok.decode(tape, kept, &samples[static_cast<size_t>(i)].mask, false);
        pairs.emplace_back(tok.mask_from_patches(pred.val()), samples[static_cast<size_t>(i)].mask);
    }
    return giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>>(pairs)).giou;
}

template <typename S>
Stage1Result train_stage1(Tokenizer<S>& tok, const std::vector<LoadedSample>& train,
                          const std::vector<LoadedSample>& val, const Stage1Config& cfg,
                          std::ostream* log) {
    require(!train.empty(), "train_stage1: empty dataset");
    require(cfg.epochs >= 1 && cfg.batch >= 1, "train_stage1: bad epochs/batch");

    Rng rng(cfg.seed);
    Optimizer<S> opt(OptimizerConfig{OptKind::adam, cfg.lr});
    tok.params().set_trainable(true);

    const std::vector<LoadedSample>& eval_set = val.empty() ? train : val;
    const int n_latent = tok.config().n_latent;

    Stage1Result result;
    std::vector<std::vector<S>> last_good;  // params at the last finite-loss epoch end
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        tok.reset_codebook_usage();
        std::vector<std::vector<S>> donors;  // encoder rows for dead-entry reseeding
        double loss_acc = 0.0;
        int in_batch = 0;
        bool diverged = false;

        tok.params().zero_grads();
        for (size_t oi = 0; oi < order.size(); ++oi) {
            const LoadedSample& s = train[order[oi]];
            Tape<S> tape;
            auto enc = tok.encode(tape, s.mask, true);
            auto q = tok.quantize(tape, enc.t_pre, true);

            const int keep = cfg.tail_drop ? rng.uniform_int(1, n_latent) : n_latent;
            const std::vector<S> kv = keep_vector<S>(n_latent, keep);
            Tensor<S> kvt = tape.constant(Shape::vec(n_latent), std::span<const S>(kv));
            Tensor<S> kept = scale_rows(q.tokens, kvt);

            const bool drop_px = tok.config().pixel_branch && rng.uniform() < cfg.px_dropout;
            Tensor<S> pred = tok.decode(tape, kept, drop_px ? nullptr : &s.mask, true);
            Tensor<S> gt = tok.gt_patches(tape, s.mask);
            Tensor<S> loss = add(mse(pred, gt), smul(q.vq_loss, cfg.vq_weight));

            const double lv = static_cast<double>(loss.item());
            if (!std::isfinite(lv)) {
                diverged = true;
                break;
            }
            loss_acc += lv;
            tape.backward(loss);

            if (donors.size() < 64 && rng.uniform() < 0.1) {
                const int row = rng.uniform_int(0, n_latent - 1);
                const auto vals = enc.t_pre.val();
                donors.emplace_back(vals.begin() + static_cast<int64_t>(row) * tok.config().d,
                                    vals.begin() + static_cast<int64_t>(row + 1) * tok.config().d);
            }

            if (++in_batch == cfg.batch || oi + 1 == order.size()) {
                opt.step(tok.params());
                tok.params().zero_grads();
                in_batch = 0;
            }
        }

        if (diverged) {
            if (!last_good.empty()) {
                for (size_t i = 0; i < tok.params().size(); ++i)
                    tok.params().at(i).value = last_good[i];
            }
            throw TrainingAbort(str_cat("stage1: non-finite loss in epoch ", epoch,
                                        "; parameters restored to last good epoch"));
        }

        tok.reseed_dead_entries(donors, rng);
        last_good = tok.params().snapshot_values();

        Stage1EpochRow row;
        row.epoch = epoch;
        row.loss = loss_acc / static_cast<double>(train.size());
        row.giou_k2 = stage1_giou_at_keep(tok, eval_set, cfg.eval_subset, 2);
        row.giou_k8 = stage1_giou_at_keep(tok, eval_set, cfg.eval_subset, 8);
        row.giou_k16 = stage1_giou_at_keep(tok, eval_set, cfg.eval_subset, 16);
        row.giou_k32 = stage1_giou_at_keep(tok, eval_set, cfg.eval_subset, 32);
        result.history.push_back(row);
        if (log)
            (*log) << "stage1 epoch " << epoch << " loss " << format_number(row.loss)
                   << " giou k2/k8/k16/k32 " << format_number(row.giou_k2) << "/"
                   << format_number(row.giou_k8) << "/" << format_number(row.giou_k16) << "/"
                   << format_number(row.giou_k32) << "\n";
    }
    return result;
}

// -------------------------------------------------------------------- stage 1.5

template <typename S>
Stage15Result train_stage15(Tokenizer<S>& tok, LengthPredictor<S>& lp,
                            const std::vector<LoadedSample>& train,
                            const std::vector<LoadedSample>& val, const Stage15Config& cfg,
                            std::ostream* log) {
    require(!train.empty(), "train_stage15: empty dataset");
    require(cfg.lambda >= 0.0, "train_stage15: lambda must be non-negative");
    require(lp.config().d == tok.config().d, "train_stage15: dim mismatch between models");

    tok.params().set_trainable(false);
    lp.params().set_trainable(true);
    const auto frozen = tok.params().snapshot_values();

    Rng rng(cfg.seed);
    Optimizer<S> opt(OptimizerConfig{OptKind::adam, cfg.lr});
    const int n_latent = tok.config().n_latent;
    const Shape tok_shape = Shape::mat(n_latent, tok.config().d);
    const Shape cls_shape = Shape::vec(tok.config().d);

    // MT is frozen: encode every sample once.
    std::vector<CachedTokens<S>> cache;
    cache.reserve(train.size());
    for (const auto& s : train) cache.push_back(encode_cached(tok, s.mask));
    const std::vector<LoadedSample>& eval_set = val.empty() ? train : val;
    std::vector<CachedTokens<S>> eval_cache;
    const int eval_n = std::min<int>(cfg.eval_subset, static_cast<int>(eval_set.size()));
    for (int i = 0; i < eval_n; ++i) eval_cache.push_back(encode_cached(tok, eval_set[static_cast<size_t>(i)].mask));

    Stage15Result result;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        lp.params().zero_grads();
        int in_batch = 0;
        for (size_t oi = 0; oi < order.size(); ++oi) {
            const LoadedSample& s = train[order[oi]];
            const CachedTokens<S>& c = cache[order[oi]];
            Tape<S> tape;
            Tensor<S> tokens = tape.constant(tok_shape, std::span<const S>(c.tokens));
            Tensor<S> t_cls = tape.constant(cls_shape, std::span<const S>(c.t_cls));
            auto stop = lp.predict_stop(tape, tokens, t_cls, true);
            Tensor<S> chunked = lp.chunk(tape, tokens, stop);
            Tensor<S> pred = tok.decode(tape, chunked, &s.mask, false);
            Tensor<S> gt = tok.gt_patches(tape, s.mask);
            Tensor<S> loss = loss_ala(tape, pred, gt, stop.l_hat, cfg.lambda);
            require(std::isfinite(static_cast<double>(loss.item())),
                    "train_stage15: non-finite loss");
            tape.backward(loss);
            if (++in_batch == cfg.batch || oi + 1 == order.size()) {
                opt.step(lp.params());
                lp.params().zero_grads();
                in_batch = 0;
            }
        }

        // eval pass
        Stage15EpochRow row;
        row.epoch = epoch;
        std::vector<double> lens;
        std::vector<double> ents;
        std::vector<std::pair<MaskGrid, MaskGrid>> pairs;
        for (int i = 0; i < eval_n; ++i) {
            const CachedTokens<S>& c = eval_cache[static_cast<size_t>(i)];
            Tape<S> tape;
            Tensor<S> tokens = tape.constant(tok_shape, std::span<const S>(c.tokens));
            Tensor<S> t_cls = tape.constant(cls_shape, std::span<const S>(c.t_cls));
            auto stop = lp.predict_stop(tape, tokens, t_cls, false);
            lens.push_back(stop.l_value);
            double ent = 0.0;
            for (S pv : stop.p.val()) {
                const double p = static_cast<double>(pv);
                if (p > 0) ent -= p * std::log(p);
            }
            ents.push_back(ent);
            const std::vector<S> kv = keep_vector<S>(n_latent, stop.keep);
            Tensor<S> kvt = tape.constant(Shape::vec(n_latent), std::span<const S>(kv));
            Tensor<S> pred = tok.decode(tape, scale_rows(tokens, kvt),
                                        &eval_set[static_cast<size_t>(i)].mask, false);
            pairs.emplace_back(tok.mask_from_patches(pred.val()),
                               eval_set[static_cast<size_t>(i)].mask);
        }
        row.mean_len = mean_of(lens);
        row.std_len = std_of(lens);
        row.entropy = mean_of(ents);
        row.giou_at_pred_len = giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>>(pairs)).giou;
        result.history.push_back(row);
        if (log)
            (*log) << "stage15 epoch " << epoch << " mean_len " << format_number(row.mean_len)
                   << " std_len " << format_number(row.std_len) << " giou "
                   << format_number(row.giou_at_pred_len) << "\n";
    }

    // frozen-parameter drift check
    const auto now = tok.params().snapshot_values();
    for (size_t i = 0; i < now.size(); ++i)
        if (now[i] != frozen[i])
            throw std::logic_error(str_cat("train_stage15: frozen parameter drifted: ",
                                           tok.params().at(i).name));
    return result;
}

// ---------------------------------------------------------------------- stage 3

template <typename S>
Stage3Result train_stage3(Policy<S>& policy, Tokenizer<S>& frozen_tok,
                          const std::vector<LoadedSample>& prompts, const Stage3Config& cfg,
                          std::ostream* log) {
    require(!prompts.empty(), "train_stage3: empty prompt set");
    require(cfg.group_size >= 2, "train_stage3: group size must be >= 2, got ", cfg.group_size);
    require(cfg.steps >= 1 && cfg.prompts_per_step >= 1, "train_stage3: bad steps config");
    frozen_tok.params().set_trainable(false);
    policy.params().set_trainable(true);

    Policy<S> ref = policy.clone();
    Rng rng(cfg.seed);
    Optimizer<S> opt(OptimizerConfig{OptKind::adam, cfg.lr});
    GrpoConfig gcfg;
    gcfg.epsilon = cfg.epsilon;
    gcfg.beta = cfg.beta;
    gcfg.temperature = cfg.temperature;
    gcfg.kl_estimator = cfg.kl_estimator;

    std::vector<size_t> order(prompts.size());
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);
    size_t cursor = 0;

    Stage3Result result;
    int all_invalid_streak = 0;

    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<Group> groups;
        for (int pi = 0; pi < cfg.prompts_per_step; ++pi) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            const MaskGrid& prompt = prompts[order[cursor++]].mask;
            Group g;
            g.prompt = &prompt;
            Rng sample_rng(rng.fork_seed());
            for (int i = 0; i < cfg.group_size; ++i)
                g.seqs.push_back(sample_sequence(policy, prompt, cfg.temperature, cfg.top_k,
                                                 sample_rng));
            for (const auto& seq : g.seqs)
                g.rewards.push_back(compute_reward(std::span<const int>(seq.tokens), prompt,
                                                   cfg.alpha, frozen_tok));
            normalize_advantages(std::span<RewardBreakdown>(g.rewards));
            groups.push_back(std::move(g));
        }

        grpo_step(policy, ref, std::span<const Group>(groups), gcfg, opt);

        // metrics over every sampled sequence of this step
        Stage3StepRow row;
        row.step = step;
        int n = 0, valid = 0;
        for (const auto& g : groups)
            for (size_t i = 0; i < g.seqs.size(); ++i) {
                const auto& r = g.rewards[i];
                row.mean_len += r.length;
                row.mean_iou += r.iou;
                row.entropy += g.seqs[i].mean_entropy;
                row.mean_reward += r.total;
                valid += r.valid;
                ++n;
            }
        row.mean_len /= n;
        row.mean_iou /= n;
        row.entropy /= n;
        row.mean_reward /= n;
        row.frac_valid = static_cast<double>(valid) / n;
        result.history.push_back(row);

        all_invalid_streak = valid == 0 ? all_invalid_streak + 1 : 0;
        if (all_invalid_streak >= cfg.collapse_limit)
            throw TrainingAbort(str_cat("stage3: reward collapse, every sample invalid for ",
                                        all_invalid_streak, " consecutive steps (last step ",
                                        step, ", mean_len ", format_number(row.mean_len), ")"));
        if (log && (step % 25 == 0 || step == 1))
            (*log) << "stage3 step " << step << " len " << format_number(row.mean_len)
                   << " iou " << format_number(row.mean_iou) << " valid "
                   << format_number(row.frac_valid) << " reward "
                   << format_number(row.mean_reward) << "\n";
    }
    return result;
}

// ------------------------------------------------------------------- evaluation

template <typename S>
ReconEval evaluate_reconstruction(Tokenizer<S>& tok, LengthPredictor<S>* lp,
                                  const std::vector<LoadedSample>& samples, EvalMode mode) {
    require(!samples.empty(), "evaluate_reconstruction: empty dataset");
    require(mode == EvalMode::fixed || lp != nullptr,
            "evaluate_reconstruction: adaptive mode needs a length predictor");
    const int n_latent = tok.config().n_latent;

    ReconEval out;
    std::vector<std::pair<MaskGrid, MaskGrid>> pairs;
    for (const auto& s : samples) {
        Tape<S> tape;
        auto enc = tok.encode(tape, s.mask, false);
        auto q = tok.quantize(tape, enc.t_pre, false);
        int keep = n_latent;
        if (mode == EvalMode::adaptive) {
            auto stop = lp->predict_stop(tape, q.tokens, enc.t_cls, false);
            keep = stop.keep;
            out.l_hats.push_back(stop.l_value);
        }
        const std::vector<S> kv = keep_vector<S>(n_latent, keep);
        Tensor<S> kvt = tape.constant(Shape::vec(n_latent), std::span<const S>(kv));
        Tensor<S> pred = tok.decode(tape, scale_rows(q.tokens, kvt), &s.mask, false);
        pairs.emplace_back(tok.mask_from_patches(pred.val()), s.mask);
        out.keeps.push_back(static_cast<double>(keep));
    }
    out.report = giou_ciou(std::span<const std::pair<MaskGrid, MaskGrid>>(pairs));
    out.mean_len = mean_of(out.keeps);
    out.report.mean_token_length = out.mean_len;
    return out;
}

template <typename S>
PolicyEval evaluate_policy(const Policy<S>& policy, Tokenizer<S>& tok,
                           const std::vector<LoadedSample>& prompts) {
    require(!prompts.empty(), "evaluate_policy: empty prompt set");
    PolicyEval out;
    Rng rng(0);
    for (const auto& s : prompts) {
        SampledSeq seq = sample_sequence(policy, s.mask, /*temperature=*/0.0, /*top_k=*/1, rng);
        RewardBreakdown r = compute_reward(std::span<const int>(seq.tokens), s.mask, 0.0, tok);
        out.mean_len += r.length;
        out.giou += r.iou;
        out.frac_valid += r.valid;
    }
    const double n = static_cast<double>(prompts.size());
    out.mean_len /= n;
    out.giou /= n;
    out.frac_valid /= n;
    return out;
}

// ------------------------------------------------------------------ checkpoints

template <typename S>
void save_tokenizer_checkpoint(const std::string& path, const Tokenizer<S>& tok,
                               const LengthPredictor<S>* lp) {
    std::vector<CheckpointEntry> entries = export_params(tok.params());
    const TokenizerConfig& c = tok.config();
    push_config_scalar(entries, "config.grid", c.grid);
    push_config_scalar(entries, "config.patch", c.patch);
    push_config_scalar(entries, "config.d", c.d);
    push_config_scalar(entries, "config.blocks", c.blocks);
    push_config_scalar(entries, "config.heads", c.heads);
    push_config_scalar(entries, "config.codebook", c.codebook);
    push_config_scalar(entries, "config.pixel_branch", c.pixel_branch ? 1 : 0);
    push_config_scalar(entries, "config.px_pool", c.px_pool);
    if (lp != nullptr) {
        auto lpe = export_params(lp->params());
        entries.insert(entries.end(), lpe.begin(), lpe.end());
        push_config_scalar(entries, "config.tlp_learned_q", lp->config().learned_query ? 1 : 0);
    }
    write_checkpoint(path, entries);
}

template <typename S>
LoadedModel<S> load_tokenizer_checkpoint(const std::string& path) {
    const auto entries = read_checkpoint(path);
    LoadedModel<S> out;
    TokenizerConfig c;
    c.grid = static_cast<int>(config_scalar(entries, "config.grid", 64));
    c.patch = static_cast<int>(config_scalar(entries, "config.patch", 8));
    c.d = static_cast<int>(config_scalar(entries, "config.d", 64));
    c.blocks = static_cast<int>(config_scalar(entries, "config.blocks", 2));
    c.heads = static_cast<int>(config_scalar(entries, "config.heads", 4));
    c.codebook = static_cast<int>(config_scalar(entries, "config.codebook", 256));
    c.pixel_branch = config_scalar(entries, "config.pixel_branch", 1) != 0;
    c.px_pool = static_cast<int>(config_scalar(entries, "config.px_pool", 4));
    out.config = c;
    out.tokenizer = std::make_unique<Tokenizer<S>>(c, 0);
    import_params(out.tokenizer->params(), entries);
    if (find_entry(entries, "tlp.Wv") != nullptr) {
        LengthPredictorConfig lc;
        lc.d = c.d;
        lc.n_tokens = c.n_latent;
        lc.learned_query = config_scalar(entries, "config.tlp_learned_q", 1) != 0;
        out.length_predictor = std::make_unique<LengthPredictor<S>>(lc, 0);
        import_params(out.length_predictor->params(), entries);
    }
    return out;
}

template <typename S>
void save_policy_checkpoint(const std::string& path, const Policy<S>& policy) {
    std::vector<CheckpointEntry> entries = export_params(policy.params());
    const PolicyConfig& c = policy.config();
    push_config_scalar(entries, "config.policy_codebook", c.codebook);
    push_config_scalar(entries, "config.policy_d", c.d);
    push_config_scalar(entries, "config.policy_blocks", c.blocks);
    push_config_scalar(entries, "config.policy_heads", c.heads);
    push_config_scalar(entries, "config.policy_max_mask", c.max_mask_tokens);
    push_config_scalar(entries, "config.policy_grid", c.grid);
    push_config_scalar(entries, "config.policy_patch", c.patch);
    write_checkpoint(path, entries);
}

template <typename S>
LoadedPolicy<S> load_policy_checkpoint(const std::string& path) {
    const auto entries = read_checkpoint(path);
    PolicyConfig c;
    c.codebook = static_cast<int>(config_scalar(entries, "config.policy_codebook", 256));
    c.d = static_cast<int>(config_scalar(entries, "config.policy_d", 64));
    c.blocks = static_cast<int>(config_scalar(entries, "config.policy_blocks", 2));
    c.heads = static_cast<int>(config_scalar(entries, "config.policy_heads", 4));
    c.max_mask_tokens = static_cast<int>(config_scalar(entries, "config.policy_max_mask", 32));
    c.grid = static_cast<int>(config_scalar(entries, "config.policy_grid", 64));
    c.patch = static_cast<int>(config_scalar(entries, "config.policy_patch", 8));
    LoadedPolicy<S> out;
    out.config = c;
    out.policy = std::make_unique<Policy<S>>(c, 0);
    import_params(out.policy->params(), entries);
    return out;
}

// -------------------------------------------------------------------------- csv

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), "csv: cannot open for writing: ", path);
    return out;
}

}  // namespace

void write_stage1_csv(const std::string& path, const std::vector<Stage1EpochRow>& rows) {
    auto out = open_csv(path);
    out << "epoch,loss,giou_k2,giou_k8,giou_k16,giou_k32\n";
    for (const auto& r : rows)
        out << r.epoch << "," << format_number(r.loss) << "," << format_number(r.giou_k2) << ","
            << format_number(r.giou_k8) << "," << format_number(r.giou_k16) << ","
            << format_number(r.giou_k32) << "\n";
}

void write_stage15_csv(const std::string& path, const std::vector<Stage15EpochRow>& rows) {
    auto out = open_csv(path);
    out << "epoch,mean_len,std_len,entropy,giou_at_pred_len\n";
    for (const auto& r : rows)
        out << r.epoch << "," << format_number(r.mean_len) << "," << format_number(r.std_len)
            << "," << format_number(r.entropy) << "," << format_number(r.giou_at_pred_len)
            << "\n";
}

void write_stage3_csv(const std::string& path, const std::vector<Stage3StepRow>& rows) {
    auto out = open_csv(path);
    out << "step,mean_len,mean_iou,entropy,frac_valid,mean_reward\n";
    for (const auto& r : rows)
        out << r.step << "," << format_number(r.mean_len) << "," << format_number(r.mean_iou)
            << "," << format_number(r.entropy) << "," << format_number(r.frac_valid) << ","
            << format_number(r.mean_reward) << "\n";
}

// explicit instantiations
template Stage1Result train_stage1<float>(Tokenizer<float>&, const std::vector<LoadedSample>&,
                                          const std::vector<LoadedSample>&, const Stage1Config&,
                                          std::ostream*);
template Stage1Result train_stage1<double>(Tokenizer<double>&, const std::vector<LoadedSample>&,
                                           const std::vector<LoadedSample>&,
                                           const Stage1Config&, std::ostream*);
template Stage15Result train_stage15<float>(Tokenizer<float>&, LengthPredictor<float>&,
                                            const std::vector<LoadedSample>&,
                                            const std::vector<LoadedSample>&,
                                            const Stage15Config&, std::ostream*);
template Stage15Result train_stage15<double>(Tokenizer<double>&, LengthPredictor<double>&,
                                             const std::vector<LoadedSample>&,
                                             const std::vector<LoadedSample>&,
                                             const Stage15Config&, std::ostream*);
template Stage3Result train_stage3<float>(Policy<float>&, Tokenizer<float>&,
                                          const std::vector<LoadedSample>&, const Stage3Config&,
                                          std::ostream*);
template Stage3Result train_stage3<double>(Policy<double>&, Tokenizer<double>&,
                                           const std::vector<LoadedSample>&,
                                           const Stage3Config&, std::ostream*);
template ReconEval evaluate_reconstruction<float>(Tokenizer<float>&, LengthPredictor<float>*,
                                                  const std::vector<LoadedSample>&, EvalMode);
template ReconEval evaluate_reconstruction<double>(Tokenizer<double>&, LengthPredictor<double>*,
                                                   const std::vector<LoadedSample>&, EvalMode);
template PolicyEval evaluate_policy<float>(const Policy<float>&, Tokenizer<float>&,
                                           const std::vector<LoadedSample>&);
template PolicyEval evaluate_policy<double>(const Policy<double>&, Tokenizer<double>&,
                                            const std::vector<LoadedSample>&);
template void save_tokenizer_checkpoint<float>(const std::string&, const Tokenizer<float>&,
                                               const LengthPredictor<float>*);
template void save_tokenizer_checkpoint<double>(const std::string&, const Tokenizer<double>&,
                                                const LengthPredictor<double>*);
template LoadedModel<float> load_tokenizer_checkpoint<float>(const std::string&);
template LoadedModel<double> load_tokenizer_checkpoint<double>(const std::string&);
template void save_policy_checkpoint<float>(const std::string&, const Policy<float>&);
template void save_policy_checkpoint<double>(const std::string&, const Policy<double>&);
template LoadedPolicy<float> load_policy_checkpoint<float>(const std::string&);
template LoadedPolicy<double> load_policy_checkpoint<double>(const std::string&);

}  // namespace alto
