// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "alto/optim.hpp"

namespace alto {

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    int64_t checked = 0;
};

/// Central finite-difference check of analytic gradients.
///
/// `eval(with_grad)` must rebuild the forward pass from the current parameter
/// values and return the scalar loss; when with_grad is true it must also
/// leave analytic gradients in Param::grad (grads are zeroed here first).
///
/// Relative error per entry: |a - n| / max(|a|, |n|), with entries where
/// both magnitudes fall below `atol` accepted outright. Functions that are
/// non-differentiable at the evaluation point show up as a failed report
/// (large rel err), not a crash.
template <typename S>
GradCheckReport grad_check(std::span<Param<S>* const> params,
                           const std::function<double(bool with_grad)>& eval,
                           double h = 1e-5, double tol = 1e-6, double atol = 1e-8) {
    require(h > 0, "grad_check: step must be positive, got ", h);
    GradCheckReport rep;

    for (Param<S>* p : params) p->zero_grad();
    const double f0 = eval(true);
    require(std::isfinite(f0), "grad_check: non-finite loss ", f0);

    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (Param<S>* p : params) analytic.push_back(p->grad);

    for (size_t pi = 0; pi < params.size(); ++pi) {
        Param<S>* p = params[pi];
        for (size_t k = 0; k < p->value.size(); ++k) {
            const S orig = p->value[k];
            p->value[k] = orig + static_cast<S>(h);
            const double fp = eval(false);
            p->value[k] = orig - static_cast<S>(h);
            const double fm = eval(false);
            p->value[k] = orig;
            require(std::isfinite(fp) && std::isfinite(fm),
                    "grad_check: non-finite loss while perturbing ", p->name, "[", k, "]");
            const double num = (fp - fm) / (2.0 * h);
            const double ana = static_cast<double>(analytic[pi][k]);
            const double denom = std::max(std::abs(ana), std::abs(num));
            double rel = 0.0;
            if (denom >= atol) rel = std::abs(ana - num) / denom;
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p->name;
                rep.worst_index = static_cast<int>(k);
            }
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace alto
