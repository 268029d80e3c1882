// SPDX-License-Identifier: Apache-2.0
#include "alto/tokenizer.hpp"

#include <cmath>

namespace alto {

void TokenizerConfig::validate() const {
    require(n_latent == 32, "tokenizer: latent token count is fixed at 32, got ", n_latent);
    require(grid >= 8, "tokenizer: grid must be at least 8, got ", grid);
    require(patch > 0 && grid % patch == 0, "tokenizer: patch ", patch,
            " must divide grid ", grid);
    require(d > 0 && heads > 0 && d % heads == 0, "tokenizer: embed dim ", d,
            " must be divisible by heads ", heads);
    require(blocks >= 1, "tokenizer: need at least one block");
    require(codebook >= 1, "tokenizer: empty codebook");
    if (pixel_branch) {
        require(px_pool >= 1 && patch % px_pool == 0 && grid % px_pool == 0,
                "tokenizer: px_pool ", px_pool, " must divide patch ", patch);
    }
}

template <typename S>
Tokenizer<S>::Tokenizer(const TokenizerConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    const int d = cfg_.d;
    const int np = cfg_.n_patches();

    latent_ = &params_.add_normal("mt.latent", Shape::mat(cfg_.n_latent, d), rng, 0.02);
    cls_ = &params_.add_normal("mt.cls", Shape::mat(1, d), rng, 0.02);
    enc_pe_w_ = &params_.add_xavier("mt.patch.w", cfg_.patch * cfg_.patch, d, rng);
    enc_pe_b_ = &params_.add("mt.patch.b", Shape::vec(d));
    enc_pos_ = &params_.add_normal("mt.pos", Shape::mat(np, d), rng, 0.02);
    for (int b = 0; b < cfg_.blocks; ++b)
        enc_blocks_.push_back(TransformerBlock<S>::create(params_, str_cat("mt.blk", b), d,
                                                          cfg_.heads, rng));
    enc_lnf_g_ = &params_.add("mt.lnf.g", Shape::vec(d));
    std::fill(enc_lnf_g_->value.begin(), enc_lnf_g_->value.end(), S(1));
    enc_lnf_b_ = &params_.add("mt.lnf.b", Shape::vec(d));

    codebook_ = &params_.add_normal("vq.codebook", Shape::mat(cfg_.codebook, d), rng, 1.0);
    usage_.assign(static_cast<size_t>(cfg_.codebook), 0);

    dec_tok_pos_ = &params_.add_normal("md.tok_pos", Shape::mat(cfg_.n_latent, d), rng, 0.02);
    dec_px_pos_ = &params_.add_normal("md.px_pos", Shape::mat(np, d), rng, 0.02);
    if (cfg_.pixel_branch) {
        const int px_patch = cfg_.patch / cfg_.px_pool;
        px_w_ = &params_.add_xavier("px.patch.w", px_patch * px_patch, d, rng);
        px_b_ = &params_.add("px.patch.b", Shape::vec(d));
        dec_queries_ = nullptr;
    } else {
        px_w_ = nullptr;
        px_b_ = nullptr;
        dec_queries_ = &params_.add_normal("md.queries", Shape::mat(np, d), rng, 0.02);
    }
    for (int b = 0; b < cfg_.blocks; ++b)
        dec_blocks_.push_back(TransformerBlock<S>::create(params_, str_cat("md.blk", b), d,
                                                          cfg_.heads, rng));
    dec_lnf_g_ = &params_.add("md.lnf.g", Shape::vec(d));
    std::fill(dec_lnf_g_->value.begin(), dec_lnf_g_->value.end(), S(1));
    dec_lnf_b_ = &params_.add("md.lnf.b", Shape::vec(d));
    head_w_ = &params_.add_xavier("md.head.w", d, cfg_.patch * cfg_.patch, rng);
    head_b_ = &params_.add("md.head.b", Shape::vec(cfg_.patch * cfg_.patch));
}

template <typename S>
std::vector<S> Tokenizer<S>::patchify(const MaskGrid& mask, int patch) const {
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

template <typename S>
typename Tokenizer<S>::Encoded Tokenizer<S>::encode(Tape<S>& tape, const MaskGrid& mask,
                                                    bool with_grad) {
    require(mask.height == cfg_.grid && mask.width == cfg_.grid,
            "encode: mask is ", mask.height, "x", mask.width, ", configured grid is ",
            cfg_.grid, "x", cfg_.grid);
    const int np = cfg_.n_patches();
    const std::vector<S> patches = patchify(mask, cfg_.patch);
    Tensor<S> px = tape.constant(Shape::mat(np, cfg_.patch * cfg_.patch),
                                 std::span<const S>(patches));
    Tensor<S> pe = add(add(matmul(px, tape.param(*enc_pe_w_, with_grad)),
                           tape.param(*enc_pe_b_, with_grad)),
                       tape.param(*enc_pos_, with_grad));
    Tensor<S> x = concat_rows({tape.param(*latent_, with_grad), tape.param(*cls_, with_grad), pe});
    for (const auto& blk : enc_blocks_) x = blk.forward(tape, x, with_grad);
    x = layer_norm(x, tape.param(*enc_lnf_g_, with_grad), tape.param(*enc_lnf_b_, with_grad));
    Encoded out;
    out.t_pre = slice_rows(x, 0, cfg_.n_latent);
    out.t_cls = reshape(slice_rows(x, cfg_.n_latent, cfg_.n_latent + 1), Shape::vec(cfg_.d));
    return out;
}

template <typename S>
typename Tokenizer<S>::Quantized Tokenizer<S>::quantize(Tape<S>& tape, Tensor<S> t_pre,
                                                        bool with_grad) {
    require(all_finite(t_pre.val()), "quantize: non-finite encoder features");
    const Shape& st = t_pre.shape();
    require(st.rank == 2 && st.cols() == cfg_.d, "quantize: expected [n,", cfg_.d,
            "], got ", st.str());
    require(cfg_.codebook > 0, "quantize: empty codebook");

    const int n = st.rows(), d = cfg_.d, K = cfg_.codebook;
    Quantized out;
    out.indices.resize(static_cast<size_t>(n));
    std::span<const S> tv = t_pre.val();
    for (int i = 0; i < n; ++i) {
        int best = 0;
        S best_d2 = std::numeric_limits<S>::max();
        for (int k = 0; k < K; ++k) {
            S d2 = 0;
            const S* e = codebook_->value.data() + static_cast<size_t>(k) * d;
            const S* x = tv.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) {
                const S diff = x[j] - e[j];
                d2 += diff * diff;
            }
            if (d2 < best_d2) {  // strict: lowest index wins ties
                best_d2 = d2;
                best = k;
            }
        }
        out.indices[static_cast<size_t>(i)] = best;
        ++usage_[static_cast<size_t>(best)];
    }

    Tensor<S> cb = tape.param(*codebook_, with_grad);
    Tensor<S> e_sel = embedding(cb, std::span<const int>(out.indices));
    out.tokens = straight_through(t_pre, e_sel);
    Tensor<S> codebook_term = mse(detach(t_pre), e_sel);
    Tensor<S> commit_term = mse(t_pre, detach(e_sel));
    out.vq_loss = add(codebook_term, smul(commit_term, cfg_.vq_commit));
    return out;
}

template <typename S>
Tensor<S> Tokenizer<S>::decode(Tape<S>& tape, Tensor<S> tokens, const MaskGrid* pixel_mask,
                               bool with_grad) {
    require(all_finite(tokens.val()), "decode: non-finite token features");
    const Shape& st = tokens.shape();
    require(st.rank == 2 && st.rows() == cfg_.n_latent && st.cols() == cfg_.d,
            "decode: expected [", cfg_.n_latent, "x", cfg_.d, "], got ", st.str());
    const int np = cfg_.n_patches();

    Tensor<S> tok_in = add(tokens, tape.param(*dec_tok_pos_, with_grad));
    Tensor<S> px_in;
    if (cfg_.pixel_branch) {
        Tensor<S> feats;
        if (pixel_mask != nullptr) {
            require(pixel_mask->height == cfg_.grid && pixel_mask->width == cfg_.grid,
                    "decode: pixel input is ", pixel_mask->height, "x", pixel_mask->width,
                    ", configured grid is ", cfg_.grid);
            // coarse view only: box-downsample before embedding
            const int pool = cfg_.px_pool;
            MaskGrid down(cfg_.grid / pool, cfg_.grid / pool);
            for (int r = 0; r < down.height; ++r)
                for (int c = 0; c < down.width; ++c) {
                    float acc = 0.0f;
                    for (int i = 0; i < pool; ++i)
                        for (int j = 0; j < pool; ++j)
                            acc += pixel_mask->at(r * pool + i, c * pool + j);
                    down.at(r, c) = acc / static_cast<float>(pool * pool);
                }
            const int px_patch = cfg_.patch / pool;
            const std::vector<S> patches = patchify(down, px_patch);
            Tensor<S> pxc = tape.constant(Shape::mat(np, px_patch * px_patch),
                                          std::span<const S>(patches));
            feats = add(matmul(pxc, tape.param(*px_w_, with_grad)), tape.param(*px_b_, with_grad));
        } else {
            std::vector<S> zeros(static_cast<size_t>(np) * cfg_.d, S(0));
            feats = tape.constant(Shape::mat(np, cfg_.d), std::span<const S>(zeros));
        }
        px_in = add(feats, tape.param(*dec_px_pos_, with_grad));
    } else {
        px_in = add(tape.param(*dec_queries_, with_grad), tape.param(*dec_px_pos_, with_grad));
    }

    Tensor<S> x = concat_rows({tok_in, px_in});
    for (const auto& blk : dec_blocks_) x = blk.forward(tape, x, with_grad);
    x = layer_norm(x, tape.param(*dec_lnf_g_, with_grad), tape.param(*dec_lnf_b_, with_grad));
    Tensor<S> px_out = slice_rows(x, cfg_.n_latent, cfg_.n_latent + np);
    Tensor<S> logits = add(matmul(px_out, tape.param(*head_w_, with_grad)),
                           tape.param(*head_b_, with_grad));
    return sigmoid(logits);
}

template <typename S>
Tensor<S> Tokenizer<S>::gt_patches(Tape<S>& tape, const MaskGrid& mask) const {
    require(mask.height == cfg_.grid && mask.width == cfg_.grid, "gt_patches: mask is ",
            mask.height, "x", mask.width, ", configured grid is ", cfg_.grid);
    const std::vector<S> patches = patchify(mask, cfg_.patch);
    return tape.constant(Shape::mat(cfg_.n_patches(), cfg_.patch * cfg_.patch),
                         std::span<const S>(patches));
}

template <typename S>
MaskGrid Tokenizer<S>::mask_from_patches(std::span<const S> patch_values) const {
    const int side = cfg_.patches_per_side();
    const int patch = cfg_.patch;
    require(static_cast<int64_t>(patch_values.size()) ==
                static_cast<int64_t>(side) * side * patch * patch,
            "mask_from_patches: wrong element count ", patch_values.size());
    MaskGrid m(cfg_.grid, cfg_.grid);
    size_t k = 0;
    for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc)
            for (int r = 0; r < patch; ++r)
                for (int c = 0; c < patch; ++c)
                    m.at(pr * patch + r, pc * patch + c) =
                        std::clamp(static_cast<float>(patch_values[k++]), 0.0f, 1.0f);
    return m;
}

template <typename S>
int Tokenizer<S>::reseed_dead_entries(const std::vector<std::vector<S>>& donors, Rng& rng) {
    if (donors.empty()) return 0;
    int reseeded = 0;
    const int d = cfg_.d;
    for (int k = 0; k < cfg_.codebook; ++k) {
        if (usage_[static_cast<size_t>(k)] != 0) continue;
        const auto& donor = donors[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(donors.size()) - 1))];
        for (int j = 0; j < d; ++j)
            codebook_->value[static_cast<size_t>(k) * d + j] =
                donor[static_cast<size_t>(j)] + static_cast<S>(rng.normal(0.0, 0.01));
        ++reseeded;
    }
    return reseeded;
}

template class Tokenizer<float>;
template class Tokenizer<double>;

}  // namespace alto
