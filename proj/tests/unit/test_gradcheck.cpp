// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "alto/grad_check.hpp"
#include "alto/tensor.hpp"

using namespace alto;

TEST_CASE("sum of squares checks against the analytic gradient 2x") {
    ParamStore<double> store;
    Param<double>& p = store.add("theta", Shape::vec(5));
    p.value = {0.4, -1.2, 2.0, 0.0, 3.3};

    auto eval = [&](bool with_grad) {
        Tape<double> tape;
        Tensor<double> x = tape.param(p);
        Tensor<double> loss = sum(mul(x, x));
        if (with_grad) tape.backward(loss);
        return static_cast<double>(loss.item());
    };
    std::vector<Param<double>*> ptrs{&p};
    auto rep = grad_check<double>(std::span<Param<double>* const>(ptrs), eval, 1e-5, 1e-8);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-8);
    CHECK(rep.checked == 5);
    // the analytic gradient stored in p.grad is 2*theta
    for (size_t i = 0; i < p.value.size(); ++i)
        CHECK(p.grad[i] == doctest::Approx(2.0 * p.value[i]).epsilon(1e-12));
}

TEST_CASE("internal detach passes only against the detach-respecting gradient") {
    ParamStore<double> store;
    Param<double>& p = store.add("theta", Shape::vec(3));
    p.value = {0.7, -0.2, 1.1};

    // loss = sum(detach(x) * x): detach-respecting gradient is x (not 2x)
    auto eval = [&](bool with_grad) {
        Tape<double> tape;
        Tensor<double> x = tape.param(p);
        Tensor<double> loss = sum(mul(detach(x), x));
        if (with_grad) tape.backward(loss);
        return static_cast<double>(loss.item());
    };
    std::vector<Param<double>*> ptrs{&p};
    // FD sees d/dx of x^2 = 2x while the analytic gradient is x: must fail
    auto rep = grad_check<double>(std::span<Param<double>* const>(ptrs), eval, 1e-5, 1e-6);
    CHECK_FALSE(rep.pass);

    // against the correct detach-respecting oracle the analytic side is right
    p.zero_grad();
    eval(true);
    for (size_t i = 0; i < p.value.size(); ++i)
        CHECK(p.grad[i] == doctest::Approx(p.value[i]).epsilon(1e-12));
}

TEST_CASE("non-differentiable point is reported, not a crash") {
    ParamStore<double> store;
    Param<double>& p = store.add("theta", Shape::scalar());
    p.value = {0.0};  // clamp kink sits exactly here

    auto eval = [&](bool with_grad) {
        Tape<double> tape;
        Tensor<double> x = tape.param(p);
        Tensor<double> loss = reshape(clamp_op(x, 0.0, 10.0), Shape::scalar());
        if (with_grad) tape.backward(loss);
        return static_cast<double>(loss.item());
    };
    std::vector<Param<double>*> ptrs{&p};
    auto rep = grad_check<double>(std::span<Param<double>* const>(ptrs), eval, 1e-5, 1e-6);
    CHECK_FALSE(rep.pass);  // discrepancy flagged
    CHECK(rep.max_rel_err > 0.1);
}

TEST_CASE("non-finite loss is rejected") {
    ParamStore<double> store;
    Param<double>& p = store.add("theta", Shape::scalar());
    p.value = {-1.0};
    auto eval = [&](bool with_grad) {
        Tape<double> tape;
        Tensor<double> x = tape.param(p);
        Tensor<double> loss = reshape(log_op(x), Shape::scalar());  // log of a negative
        if (with_grad) tape.backward(loss);
        return static_cast<double>(loss.item());
    };
    std::vector<Param<double>*> ptrs{&p};
    CHECK_THROWS_AS(
        (void)grad_check<double>(std::span<Param<double>* const>(ptrs), eval, 1e-5, 1e-6),
        std::invalid_argument);
}

TEST_CASE("grad_check validates the step size") {
    ParamStore<double> store;
    Param<double>& p = store.add("theta", Shape::scalar());
    p.value = {1.0};
    auto eval = [&](bool) { return 0.0; };
    std::vector<Param<double>*> ptrs{&p};
    CHECK_THROWS_AS(
        (void)grad_check<double>(std::span<Param<double>* const>(ptrs), eval, 0.0, 1e-6),
        std::invalid_argument);
}
