// SPDX-License-Identifier: Apache-2.0
//
// Mask tokenizer: a transformer encoder with 32 learnable latent tokens and a
// CLS readout, a vector quantizer with straight-through gradients, and a
// bidirectional de-tokenizer that reconstructs the mask from (possibly
// truncated) token features plus coarse pixel features.

#pragma once

#include <cstdint>
#include <vector>

#include "alto/mask.hpp"
#include "alto/optim.hpp"
#include "alto/transformer.hpp"

namespace alto {

struct TokenizerConfig {
    int grid = 64;
    int patch = 8;
    int d = 64;
    int blocks = 2;
    int heads = 4;
    int n_latent = 32;  // fixed token budget
    int codebook = 256;
    bool pixel_branch = true;
    int px_pool = 4;         // box-downsample factor for the pixel branch input
    double vq_commit = 0.25;

    int patches_per_side() const { return grid / patch; }
    int n_patches() const { return patches_per_side() * patches_per_side(); }
    void validate() const;
};

template <typename S>
class Tokenizer {
public:
    Tokenizer(const TokenizerConfig& cfg, uint64_t init_seed);

    const TokenizerConfig& config() const { return cfg_; }
    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    struct Encoded {
        Tensor<S> t_pre;  // n_latent x d, pre-quantization
        Tensor<S> t_cls;  // d
    };
    Encoded encode(Tape<S>& tape, const MaskGrid& mask, bool with_grad = true);

    struct Quantized {
        Tensor<S> tokens;          // n_latent x d; rows are bit-equal codebook rows
        std::vector<int> indices;  // nearest codebook entry, lowest index on ties
        Tensor<S> vq_loss;         // codebook + commitment terms
    };
    Quantized quantize(Tape<S>& tape, Tensor<S> t_pre, bool with_grad = true);

    /// Decode token features (zero vectors beyond the kept length) into a
    /// patch-arranged mask prediction of shape [n_patches, patch*patch] in
    /// [0,1]. `pixel_mask` selects the pixel-branch input: the grid itself
    /// (box-downsampled internally) or, when null, all-zero pixel features.
    /// With the pixel branch disabled the decoder uses learned queries.
    Tensor<S> decode(Tape<S>& tape, Tensor<S> tokens, const MaskGrid* pixel_mask,
                     bool with_grad = true);

    /// Ground truth as a constant leaf in the decoder's patch arrangement.
    Tensor<S> gt_patches(Tape<S>& tape, const MaskGrid& mask) const;

    MaskGrid mask_from_patches(std::span<const S> patch_values) const;

    std::vector<S> patchify(const MaskGrid& mask, int patch) const;

    // codebook bookkeeping (usage counted per quantize call)
    const std::vector<int64_t>& codebook_usage() const { return usage_; }
    void reset_codebook_usage() { std::fill(usage_.begin(), usage_.end(), 0); }
    /// Re-seed entries with zero usage from donated encoder-output rows.
    int reseed_dead_entries(const std::vector<std::vector<S>>& donors, Rng& rng);

private:
    TokenizerConfig cfg_;
    ParamStore<S> params_;
    std::vector<int64_t> usage_;

    Param<S>*latent_, *cls_, *enc_pe_w_, *enc_pe_b_, *enc_pos_, *enc_lnf_g_, *enc_lnf_b_;
    std::vector<TransformerBlock<S>> enc_blocks_;
    Param<S>* codebook_;
    Param<S>*dec_tok_pos_, *dec_px_pos_, *px_w_, *px_b_, *dec_queries_;
    Param<S>*dec_lnf_g_, *dec_lnf_b_, *head_w_, *head_b_;
    std::vector<TransformerBlock<S>> dec_blocks_;
};

extern template class Tokenizer<float>;
extern template class Tokenizer<double>;

}  // namespace alto
