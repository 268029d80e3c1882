// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "alto/optim.hpp"
#include "alto/tensor.hpp"

namespace alto {

/// Pre-LN transformer block: multi-head attention + SwiGLU MLP, both with
/// residual connections. Parameters are registered on an external store so
/// the owning model controls naming and checkpointing.
template <typename S>
struct TransformerBlock {
    int d = 0;
    int heads = 0;
    int hidden = 0;
    Param<S>*ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    Param<S>*ln2_g, *ln2_b, *mlp_wg, *mlp_bg, *mlp_wv, *mlp_bv, *mlp_wo, *mlp_bo;

    static TransformerBlock create(ParamStore<S>& ps, const std::string& prefix, int d,
                                   int heads, Rng& rng) {
        require(d % heads == 0, "transformer: embed dim ", d, " not divisible by heads ", heads);
        TransformerBlock b;
        b.d = d;
        b.heads = heads;
        b.hidden = 2 * d;
        auto ones = [&](const std::string& n) {
            Param<S>& p = ps.add(n, Shape::vec(d));
            std::fill(p.value.begin(), p.value.end(), S(1));
            return &p;
        };
        b.ln1_g = ones(prefix + ".ln1.g");
        b.ln1_b = &ps.add(prefix + ".ln1.b", Shape::vec(d));
        b.wq = &ps.add_xavier(prefix + ".attn.wq", d, d, rng);
        b.bq = &ps.add(prefix + ".attn.bq", Shape::vec(d));
        b.wk = &ps.add_xavier(prefix + ".attn.wk", d, d, rng);
        b.bk = &ps.add(prefix + ".attn.bk", Shape::vec(d));
        b.wv = &ps.add_xavier(prefix + ".attn.wv", d, d, rng);
        b.bv = &ps.add(prefix + ".attn.bv", Shape::vec(d));
        b.wo = &ps.add_xavier(prefix + ".attn.wo", d, d, rng);
        b.bo = &ps.add(prefix + ".attn.bo", Shape::vec(d));
        b.ln2_g = ones(prefix + ".ln2.g");
        b.ln2_b = &ps.add(prefix + ".ln2.b", Shape::vec(d));
        b.mlp_wg = &ps.add_xavier(prefix + ".mlp.wg", d, b.hidden, rng);
        b.mlp_bg = &ps.add(prefix + ".mlp.bg", Shape::vec(b.hidden));
        b.mlp_wv = &ps.add_xavier(prefix + ".mlp.wv", d, b.hidden, rng);
        b.mlp_bv = &ps.add(prefix + ".mlp.bv", Shape::vec(b.hidden));
        b.mlp_wo = &ps.add_xavier(prefix + ".mlp.wo", b.hidden, d, rng);
        b.mlp_bo = &ps.add(prefix + ".mlp.bo", Shape::vec(d));
        return b;
    }

    /// `causal_mask`, when given, is an additive n x n score mask.
    Tensor<S> forward(Tape<S>& tape, Tensor<S> x, bool with_grad,
                      const std::vector<S>* causal_mask = nullptr) const {
        const int dh = d / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        Tensor<S> h1 = layer_norm(x, tape.param(*ln1_g, with_grad), tape.param(*ln1_b, with_grad));
        Tensor<S> q = add(matmul(h1, tape.param(*wq, with_grad)), tape.param(*bq, with_grad));
        Tensor<S> k = add(matmul(h1, tape.param(*wk, with_grad)), tape.param(*bk, with_grad));
        Tensor<S> v = add(matmul(h1, tape.param(*wv, with_grad)), tape.param(*bv, with_grad));

        std::vector<Tensor<S>> head_out;
        head_out.reserve(static_cast<size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            Tensor<S> qh = slice_cols(q, h * dh, (h + 1) * dh);
            Tensor<S> kh = slice_cols(k, h * dh, (h + 1) * dh);
            Tensor<S> vh = slice_cols(v, h * dh, (h + 1) * dh);
            head_out.push_back(attention(qh, kh, vh, scale, causal_mask));
        }
        Tensor<S> att = concat_cols(std::span<const Tensor<S>>(head_out));
        att = add(matmul(att, tape.param(*wo, with_grad)), tape.param(*bo, with_grad));
        x = add(x, att);

        Tensor<S> h2 = layer_norm(x, tape.param(*ln2_g, with_grad), tape.param(*ln2_b, with_grad));
        Tensor<S> gate = silu(add(matmul(h2, tape.param(*mlp_wg, with_grad)), tape.param(*mlp_bg, with_grad)));
        Tensor<S> val = add(matmul(h2, tape.param(*mlp_wv, with_grad)), tape.param(*mlp_bv, with_grad));
        Tensor<S> mlp = add(matmul(mul(gate, val), tape.param(*mlp_wo, with_grad)),
                            tape.param(*mlp_bo, with_grad));
        return add(x, mlp);
    }
};

/// Additive causal mask: 0 on/below the diagonal, -1e9 above.
template <typename S>
std::vector<S> causal_mask(int n) {
    std::vector<S> m(static_cast<size_t>(n) * n, S(0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m[static_cast<size_t>(i) * n + j] = static_cast<S>(-1e9);
    return m;
}

}  // namespace alto
