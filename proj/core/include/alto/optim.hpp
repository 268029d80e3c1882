// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "alto/rng.hpp"
#include "alto/tensor.hpp"

namespace alto {

/// Owns named parameters with stable addresses.
template <typename S>
class ParamStore {
public:
    Param<S>& add(std::string name, Shape shape) {
        auto p = std::make_unique<Param<S>>();
        p->name = std::move(name);
        p->shape = shape;
        p->value.assign(static_cast<size_t>(shape.numel()), S(0));
        p->grad.assign(static_cast<size_t>(shape.numel()), S(0));
        items_.push_back(std::move(p));
        return *items_.back();
    }

    Param<S>& add_normal(std::string name, Shape shape, Rng& rng, double stddev) {
        Param<S>& p = add(std::move(name), shape);
        for (auto& v : p.value) v = static_cast<S>(rng.normal(0.0, stddev));
        return p;
    }

    /// Xavier-normal: stddev = sqrt(2 / (fan_in + fan_out)).
    Param<S>& add_xavier(std::string name, int fan_in, int fan_out, Rng& rng) {
        const double sd = std::sqrt(2.0 / (fan_in + fan_out));
        return add_normal(std::move(name), Shape::mat(fan_in, fan_out), rng, sd);
    }

    Param<S>* find(const std::string& name) {
        for (auto& p : items_)
            if (p->name == name) return p.get();
        return nullptr;
    }
    const Param<S>* find(const std::string& name) const {
        for (auto& p : items_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    std::vector<Param<S>*> all() {
        std::vector<Param<S>*> out;
        out.reserve(items_.size());
        for (auto& p : items_) out.push_back(p.get());
        return out;
    }

    void zero_grads() {
        for (auto& p : items_) p->zero_grad();
    }

    void set_trainable(bool trainable) {
        for (auto& p : items_) p->trainable = trainable;
    }

    size_t size() const { return items_.size(); }
    Param<S>& at(size_t i) { return *items_[i]; }
    const Param<S>& at(size_t i) const { return *items_[i]; }

    int64_t numel() const {
        int64_t n = 0;
        for (const auto& p : items_) n += p->numel();
        return n;
    }

    /// Deep copy (used for reference-policy snapshots and drift checks).
    std::vector<std::vector<S>> snapshot_values() const {
        std::vector<std::vector<S>> out;
        out.reserve(items_.size());
        for (const auto& p : items_) out.push_back(p->value);
        return out;
    }

private:
    std::vector<std::unique_ptr<Param<S>>> items_;
};

enum class OptKind { sgd, adam };

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// SGD / Adam over a ParamStore. Updates only trainable parameters; with
/// identical gradient sequences the trajectory is bit-reproducible.
template <typename S>
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

    const OptimizerConfig& config() const { return cfg_; }
    int64_t steps_taken() const { return t_; }

    void step(ParamStore<S>& params) {
        ++t_;
        for (Param<S>* p : params.all()) {
            if (!p->trainable) continue;
            if (cfg_.kind == OptKind::sgd) {
                for (size_t i = 0; i < p->value.size(); ++i)
                    p->value[i] -= static_cast<S>(cfg_.lr) * p->grad[i];
                continue;
            }
            if (p->adam_m.size() != p->value.size()) {
                p->adam_m.assign(p->value.size(), S(0));
                p->adam_v.assign(p->value.size(), S(0));
            }
            const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
            const S corr1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
            const S corr2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
            for (size_t i = 0; i < p->value.size(); ++i) {
                const S g = p->grad[i];
                p->adam_m[i] = b1 * p->adam_m[i] + (S(1) - b1) * g;
                p->adam_v[i] = b2 * p->adam_v[i] + (S(1) - b2) * g * g;
                const S mhat = p->adam_m[i] / corr1;
                const S vhat = p->adam_v[i] / corr2;
                p->value[i] -= static_cast<S>(cfg_.lr) * mhat / (std::sqrt(vhat) + static_cast<S>(cfg_.eps));
            }
        }
    }

private:
    OptimizerConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace alto
