// SPDX-License-Identifier: Apache-2.0
#include "alto/length_predictor.hpp"

namespace alto {

template <typename S>
LengthPredictor<S>::LengthPredictor(const LengthPredictorConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
    require(cfg_.d > 0 && cfg_.n_tokens > 0, "length predictor: bad config");
    Rng rng(init_seed);
    wv_ = &params_.add_xavier("tlp.Wv", cfg_.d, cfg_.d, rng);
    wg_ = &params_.add_xavier("tlp.Wg", cfg_.d, cfg_.d, rng);
    // Zero query start: uniform stopping distribution on step one, while the
    // gated keys already carry signal so Wq receives gradient immediately.
    wq_ = &params_.add("tlp.Wq", Shape::mat(cfg_.d, cfg_.d));
}

template <typename S>
StopDistribution<S> LengthPredictor<S>::predict_stop(Tape<S>& tape, Tensor<S> tokens,
                                                     Tensor<S> t_cls, bool with_grad) {
    const Shape& st = tokens.shape();
    require(st.rank == 2 && st.rows() == cfg_.n_tokens && st.cols() == cfg_.d,
            "predict_stop: expected tokens [", cfg_.n_tokens, "x", cfg_.d, "], got ",
            st.str());
    require(t_cls.shape().numel() == cfg_.d, "predict_stop: expected CLS feature of dim ",
            cfg_.d, ", got ", t_cls.shape().str());
    require(all_finite(tokens.val()) && all_finite(t_cls.val()),
            "predict_stop: non-finite inputs");

    Tensor<S> keys = mul(matmul(tokens, tape.param(*wv_, with_grad)),
                         sigmoid(matmul(tokens, tape.param(*wg_, with_grad))));
    Tensor<S> query = cfg_.learned_query
                          ? matmul(reshape(t_cls, Shape::mat(1, cfg_.d)),
                                   tape.param(*wq_, with_grad))
                          : reshape(t_cls, Shape::mat(1, cfg_.d));
    // logits_i = q . k_i / sqrt(d)
    Tensor<S> logits = reshape(smul(matmul(keys, transpose(query)),
                                    1.0 / std::sqrt(static_cast<double>(cfg_.d))),
                               Shape::vec(cfg_.n_tokens));
    require(all_finite(logits.val()), "predict_stop: non-finite logits");

    StopDistribution<S> out;
    out.p = softmax(logits);
    out.P = tail_cumsum(out.p);
    std::vector<S> positions(static_cast<size_t>(cfg_.n_tokens));
    for (int i = 0; i < cfg_.n_tokens; ++i) positions[static_cast<size_t>(i)] = static_cast<S>(i + 1);
    Tensor<S> pos = tape.constant(Shape::vec(cfg_.n_tokens), std::span<const S>(positions));
    out.l_hat = sum(mul(out.p, pos));
    out.l_value = static_cast<double>(out.l_hat.item());
    out.keep = static_cast<int>(std::ceil(out.l_value - 1e-12));
    out.keep = std::min(std::max(out.keep, 1), cfg_.n_tokens);
    out.H.assign(static_cast<size_t>(cfg_.n_tokens), S(0));
    for (int i = 0; i < cfg_.n_tokens; ++i)
        if (static_cast<double>(i + 1) <= out.l_value) out.H[static_cast<size_t>(i)] = S(1);
    return out;
}

template <typename S>
Tensor<S> LengthPredictor<S>::chunk(Tape<S>& tape, Tensor<S> tokens,
                                    const StopDistribution<S>& stop) const {
    const Shape& st = tokens.shape();
    require(st.rank == 2 && st.rows() == cfg_.n_tokens, "chunk: expected [", cfg_.n_tokens,
            " x d] tokens, got ", st.str());
    Tensor<S> h = tape.constant(Shape::vec(cfg_.n_tokens), std::span<const S>(stop.H));
    Tensor<S> coeff = add(sub(stop.P, detach(stop.P)), h);
    return scale_rows(tokens, coeff);
}

template <typename S>
Tensor<S> LengthPredictor<S>::chunk_hard(Tape<S>& tape, Tensor<S> tokens,
                                         const StopDistribution<S>& stop) const {
    const Shape& st = tokens.shape();
    require(st.rank == 2 && st.rows() == cfg_.n_tokens, "chunk_hard: expected [",
            cfg_.n_tokens, " x d] tokens, got ", st.str());
    Tensor<S> h = tape.constant(Shape::vec(cfg_.n_tokens), std::span<const S>(stop.H));
    return scale_rows(tokens, h);
}

template <typename S>
Tensor<S> loss_ala(Tape<S>& tape, Tensor<S> m_pred, Tensor<S> m_gt, Tensor<S> l_hat,
                   double lambda) {
    require(lambda >= 0.0, "loss_ala: lambda must be non-negative, got ", lambda);
    require(m_pred.shape() == m_gt.shape(), "loss_ala: shape mismatch ",
            m_pred.shape().str(), " vs ", m_gt.shape().str());
    (void)tape;
    return add(mse(m_pred, m_gt), smul(l_hat, lambda));
}

template class LengthPredictor<float>;
template class LengthPredictor<double>;
template Tensor<float> loss_ala<float>(Tape<float>&, Tensor<float>, Tensor<float>,
                                       Tensor<float>, double);
template Tensor<double> loss_ala<double>(Tape<double>&, Tensor<double>, Tensor<double>,
                                         Tensor<double>, double);

}  // namespace alto
