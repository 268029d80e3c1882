// SPDX-License-Identifier: Apache-2.0
//
// Token length predictor: a gated attention head over the token features that
// yields a 32-way stopping distribution, its expected length, and the
// differentiable chunking construction that equals hard truncation in value
// while routing gradients through the cumulative stop probabilities.

#pragma once

#include <cmath>
#include <vector>

#include "alto/mask.hpp"
#include "alto/optim.hpp"
#include "alto/tensor.hpp"

namespace alto {

struct LengthPredictorConfig {
    int d = 64;
    int n_tokens = 32;
    bool learned_query = true;  // false: use T_cls directly as the query
};

/// Stopping distribution over token positions (1-based semantics).
template <typename S>
struct StopDistribution {
    Tensor<S> p;      // [n] stopping probabilities, sums to 1
    Tensor<S> P;      // [n] tail sums P_i = sum_{j>=i} p_j
    Tensor<S> l_hat;  // scalar expected length, in [1, n]
    std::vector<S> H;  // hard keep indicator H_i = 1[i+1 <= l_hat] (constant)
    double l_value = 0.0;
    int keep = 0;  // ceil(l_hat), the integer length reported to callers
};

template <typename S>
class LengthPredictor {
public:
    LengthPredictor(const LengthPredictorConfig& cfg, uint64_t init_seed);

    const LengthPredictorConfig& config() const { return cfg_; }
    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    /// k_i = (Wv T_i) ⊙ sigmoid(Wg T_i); q = Wq T_cls;
    /// p = softmax(q k^T / sqrt(d)); l_hat = sum_i i p_i.
    StopDistribution<S> predict_stop(Tape<S>& tape, Tensor<S> tokens, Tensor<S> t_cls,
                                     bool with_grad = true);

    /// Soft chunk: (P - detach(P) + H) ⊙ T. Bit-identical to H ⊙ T in value;
    /// gradients reach p through the tail sums.
    Tensor<S> chunk(Tape<S>& tape, Tensor<S> tokens, const StopDistribution<S>& stop) const;

    /// Hard chunk H ⊙ T: same forward value, no gradient to the predictor.
    Tensor<S> chunk_hard(Tape<S>& tape, Tensor<S> tokens, const StopDistribution<S>& stop) const;

private:
    LengthPredictorConfig cfg_;
    ParamStore<S> params_;
    Param<S>*wv_, *wg_, *wq_;
};

/// Combined mask + length objective: MSE(pred, gt) + lambda * l_hat.
/// Minimizing it penalizes longer sequences.
template <typename S>
Tensor<S> loss_ala(Tape<S>& tape, Tensor<S> m_pred, Tensor<S> m_gt, Tensor<S> l_hat,
                   double lambda);

extern template class LengthPredictor<float>;
extern template class LengthPredictor<double>;
extern template Tensor<float> loss_ala<float>(Tape<float>&, Tensor<float>, Tensor<float>,
                                              Tensor<float>, double);
extern template Tensor<double> loss_ala<double>(Tape<double>&, Tensor<double>, Tensor<double>,
                                                Tensor<double>, double);

}  // namespace alto
