// SPDX-License-Identifier: Apache-2.0
//
// Dense rank-0/1/2 arrays with reverse-mode automatic differentiation on a
// dynamically recorded tape. Single-threaded per tape; values are plain
// std::vector buffers so finished tensors can be copied out and handed off.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "alto/common.hpp"

namespace alto {

struct Shape {
    int rank = 0;
    int d0 = 1;  // rows (rank 2) or length (rank 1)
    int d1 = 1;  // cols (rank 2)

    static Shape scalar() { return Shape{0, 1, 1}; }
    static Shape vec(int n) { return Shape{1, n, 1}; }
    static Shape mat(int r, int c) { return Shape{2, r, c}; }

    int64_t numel() const { return static_cast<int64_t>(d0) * d1; }
    int rows() const { return d0; }
    int cols() const { return d1; }

    bool operator==(const Shape& o) const {
        return rank == o.rank && d0 == o.d0 && d1 == o.d1;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        if (rank == 0) return "[]";
        if (rank == 1) return str_cat("[", d0, "]");
        return str_cat("[", d0, "x", d1, "]");
    }
};

/// A named, persistent parameter. Lives outside any tape; gradients are
/// accumulated into `grad` by Tape::backward through leaf bindings.
template <typename S>
struct Param {
    std::string name;
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;
    std::vector<S> adam_m, adam_v;  // lazily sized by the optimizer
    bool trainable = true;

    int64_t numel() const { return shape.numel(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }
};

template <typename S>
class Tape;

/// Lightweight handle into a tape node. Valid only while the tape lives.
template <typename S>
struct Tensor {
    Tape<S>* tape = nullptr;
    int id = -1;

    bool defined() const { return tape != nullptr && id >= 0; }
    const Shape& shape() const;
    std::span<const S> val() const;
    std::span<const S> grad() const;
    S item() const;
};

template <typename S>
class Tape {
public:
    struct Node {
        Shape shape;
        std::vector<S> val;
        std::vector<S> grad;  // sized only when requires_grad
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves / no-grad nodes
    };

    Tape() { nodes_.reserve(256); }

    int size() const { return static_cast<int>(nodes_.size()); }
    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    Tensor<S> alloc(Shape shp, bool requires_grad) {
        Node n;
        n.shape = shp;
        n.val.assign(static_cast<size_t>(shp.numel()), S(0));
        if (requires_grad) n.grad.assign(static_cast<size_t>(shp.numel()), S(0));
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Tensor<S>{this, static_cast<int>(nodes_.size()) - 1};
    }

    /// Constant leaf (no gradient).
    Tensor<S> constant(Shape shp, std::span<const S> vals) {
        require(static_cast<int64_t>(vals.size()) == shp.numel(),
                "constant: data size ", vals.size(), " does not match shape ", shp.str());
        Tensor<S> t = alloc(shp, false);
        std::copy(vals.begin(), vals.end(), node(t.id).val.begin());
        return t;
    }

    Tensor<S> constant_scalar(S v) {
        Tensor<S> t = alloc(Shape::scalar(), false);
        node(t.id).val[0] = v;
        return t;
    }

    /// Differentiable leaf without a parameter binding (for gradient tests).
    Tensor<S> leaf(Shape shp, std::span<const S> vals) {
        Tensor<S> t = alloc(shp, true);
        require(static_cast<int64_t>(vals.size()) == shp.numel(),
                "leaf: data size ", vals.size(), " does not match shape ", shp.str());
        std::copy(vals.begin(), vals.end(), node(t.id).val.begin());
        return t;
    }

    /// Bind a parameter as a leaf. Pass with_grad=false on frozen/eval paths;
    /// gradient also requires the parameter itself to be trainable.
    Tensor<S> param(Param<S>& p, bool with_grad = true) {
        const bool rg = with_grad && p.trainable;
        Tensor<S> t = alloc(p.shape, rg);
        std::copy(p.value.begin(), p.value.end(), node(t.id).val.begin());
        if (rg) bindings_.push_back({&p, t.id});
        return t;
    }

    /// Reverse sweep from a scalar loss. Accumulates into bound Param::grad.
    void backward(Tensor<S> loss) {
        require(loss.tape == this, "backward: tensor belongs to another tape");
        Node& ln = node(loss.id);
        require(ln.shape.numel() == 1, "backward: loss must be scalar, got shape ",
                ln.shape.str());
        if (!ln.requires_grad) return;  // nothing reaches parameters
        ln.grad[0] = S(1);
        for (int i = loss.id; i >= 0; --i) {
            if (nodes_[static_cast<size_t>(i)].back)
                nodes_[static_cast<size_t>(i)].back(*this);
        }
        for (const Binding& b : bindings_) {
            if (b.p->grad.size() != b.p->value.size())
                b.p->grad.assign(b.p->value.size(), S(0));
            const auto& g = node(b.node_id).grad;
            for (size_t k = 0; k < g.size(); ++k) b.p->grad[k] += g[k];
        }
    }

private:
    struct Binding {
        Param<S>* p;
        int node_id;
    };
    std::vector<Node> nodes_;
    std::vector<Binding> bindings_;
};

template <typename S>
const Shape& Tensor<S>::shape() const {
    return tape->node(id).shape;
}
template <typename S>
std::span<const S> Tensor<S>::val() const {
    return tape->node(id).val;
}
template <typename S>
std::span<const S> Tensor<S>::grad() const {
    return tape->node(id).grad;
}
template <typename S>
S Tensor<S>::item() const {
    require(shape().numel() == 1, "item: tensor is not scalar, shape ", shape().str());
    return tape->node(id).val[0];
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
Tape<S>& same_tape(Tensor<S> a, Tensor<S> b) {
    require(a.defined() && b.defined(), "op: undefined tensor");
    require(a.tape == b.tape, "op: tensors belong to different tapes");
    return *a.tape;
}

template <typename S>
bool grad_wanted(const Tape<S>& t, int id) {
    return t.node(id).requires_grad;
}

}  // namespace detail

/// C[m,n] = A[m,k] @ B[k,n]. Rank-1 B is treated as a column, producing a
/// rank-1 result; rank-1 A as a row likewise.
template <typename S>
Tensor<S> matmul(Tensor<S> a, Tensor<S> b) {
    Tape<S>& t = detail::same_tape(a, b);
    const Shape& sa = t.node(a.id).shape;
    const Shape& sb = t.node(b.id).shape;
    const int m = sa.rank == 1 ? 1 : sa.rows();
    const int k = sa.rank == 1 ? sa.d0 : sa.cols();
    const int k2 = sb.rank == 1 ? sb.d0 : sb.rows();
    const int n = sb.rank == 1 ? 1 : sb.cols();
    require(sa.rank >= 1 && sb.rank >= 1 && k == k2, "matmul: incompatible shapes ",
            sa.str(), " and ", sb.str());
    Shape out_shape = (sa.rank == 1 || sb.rank == 1) ? (sa.rank == 1 && sb.rank == 1 ? Shape::scalar()
                                                        : sa.rank == 1 ? Shape::vec(n)
                                                                       : Shape::vec(m))
                                                     : Shape::mat(m, n);
    const bool rg = detail::grad_wanted(t, a.id) || detail::grad_wanted(t, b.id);
    Tensor<S> out = t.alloc(out_shape, rg);
    {
        const S* A = t.node(a.id).val.data();
        const S* B = t.node(b.id).val.data();
        S* C = t.node(out.id).val.data();
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                const S av = A[i * k + p];
                const S* Bp = B + p * n;
                S* Ci = C + i * n;
                for (int j = 0; j < n; ++j) Ci[j] += av * Bp[j];
            }
    }
    if (rg) {
        const int aid = a.id, bid = b.id, oid = out.id;
        t.node(out.id).back = [aid, bid, oid, m, k, n](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& A = tp.node(aid).val;
            const auto& B = tp.node(bid).val;
            if (tp.node(aid).requires_grad) {
                auto& ga = tp.node(aid).grad;
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const S gv = g[static_cast<size_t>(i) * n + j];
                        const S* Bj = B.data() + static_cast<size_t>(j);
                        for (int p = 0; p < k; ++p)
                            ga[static_cast<size_t>(i) * k + p] += gv * Bj[static_cast<size_t>(p) * n];
                    }
            }
            if (tp.node(bid).requires_grad) {
                auto& gb = tp.node(bid).grad;
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const S av = A[static_cast<size_t>(i) * k + p];
                        const S* gi = g.data() + static_cast<size_t>(i) * n;
                        S* gbp = gb.data() + static_cast<size_t>(p) * n;
                        for (int j = 0; j < n; ++j) gbp[j] += av * gi[j];
                    }
            }
        };
    }
    return out;
}

template <typename S>
Tensor<S> transpose(Tensor<S> a) {
    Tape<S>& t = *a.tape;
    const Shape& sa = t.node(a.id).shape;
    require(sa.rank == 2, "transpose: expected rank-2, got ", sa.str());
    const int m = sa.rows(), n = sa.cols();
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(Shape::mat(n, m), rg);
    {
        const S* A = t.node(a.id).val.data();
        S* O = t.node(out.id).val.data();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) O[j * m + i] = A[i * n + j];
    }
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid, m, n](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& ga = tp.node(aid).grad;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
        };
    }
    return out;
}

namespace detail {

// add/sub with optional row-broadcast of b over the leading dimension of a.
template <typename S>
Tensor<S> addsub(Tensor<S> a, Tensor<S> b, S sign) {
    Tape<S>& t = same_tape(a, b);
    const Shape& sa = t.node(a.id).shape;
    const Shape& sb = t.node(b.id).shape;
    const bool same = sa == sb;
    const bool bcast = sa.rank == 2 && ((sb.rank == 1 && sb.d0 == sa.cols()) ||
                                        (sb.rank == 2 && sb.rows() == 1 && sb.cols() == sa.cols()));
    require(same || bcast, "add/sub: incompatible shapes ", sa.str(), " and ", sb.str());
    const bool rg = grad_wanted(t, a.id) || grad_wanted(t, b.id);
    Tensor<S> out = t.alloc(sa, rg);
    {
        const auto& A = t.node(a.id).val;
        const auto& B = t.node(b.id).val;
        auto& O = t.node(out.id).val;
        if (same) {
            for (size_t i = 0; i < O.size(); ++i) O[i] = A[i] + sign * B[i];
        } else {
            const int rows = sa.rows(), cols = sa.cols();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    O[static_cast<size_t>(i) * cols + j] = A[static_cast<size_t>(i) * cols + j] + sign * B[static_cast<size_t>(j)];
        }
    }
    if (rg) {
        const int aid = a.id, bid = b.id, oid = out.id;
        const int rows = sa.rank == 2 ? sa.rows() : 1;
        const int cols = sa.rank == 2 ? sa.cols() : static_cast<int>(sa.numel());
        t.node(out.id).back = [aid, bid, oid, same, rows, cols, sign](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            if (tp.node(aid).requires_grad) {
                auto& ga = tp.node(aid).grad;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (tp.node(bid).requires_grad) {
                auto& gb = tp.node(bid).grad;
                if (same) {
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
                } else {
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j)
                            gb[static_cast<size_t>(j)] += sign * g[static_cast<size_t>(i) * cols + j];
                }
            }
        };
    }
    return out;
}

}  // namespace detail

template <typename S>
Tensor<S> add(Tensor<S> a, Tensor<S> b) {
    return detail::addsub(a, b, S(1));
}
template <typename S>
Tensor<S> sub(Tensor<S> a, Tensor<S> b) {
    return detail::addsub(a, b, S(-1));
}

/// Elementwise product of same-shape tensors (also the mask-multiply op when
/// one side is a constant 0/1 leaf).
template <typename S>
Tensor<S> mul(Tensor<S> a, Tensor<S> b) {
    Tape<S>& t = detail::same_tape(a, b);
    const Shape& sa = t.node(a.id).shape;
    require(sa == t.node(b.id).shape, "mul: shape mismatch ", sa.str(), " vs ",
            t.node(b.id).shape.str());
    const bool rg = detail::grad_wanted(t, a.id) || detail::grad_wanted(t, b.id);
    Tensor<S> out = t.alloc(sa, rg);
    {
        const auto& A = t.node(a.id).val;
        const auto& B = t.node(b.id).val;
        auto& O = t.node(out.id).val;
        for (size_t i = 0; i < O.size(); ++i) O[i] = A[i] * B[i];
    }
    if (rg) {
        const int aid = a.id, bid = b.id, oid = out.id;
        t.node(out.id).back = [aid, bid, oid](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& A = tp.node(aid).val;
            const auto& B = tp.node(bid).val;
            if (tp.node(aid).requires_grad) {
                auto& ga = tp.node(aid).grad;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
            }
            if (tp.node(bid).requires_grad) {
                auto& gb = tp.node(bid).grad;
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
            }
        };
    }
    return out;
}

/// out[i,j] = a[i,j] * v[i] — scales row i by v_i.
template <typename S>
Tensor<S> scale_rows(Tensor<S> a, Tensor<S> v) {
    Tape<S>& t = detail::same_tape(a, v);
    const Shape& sa = t.node(a.id).shape;
    const Shape& sv = t.node(v.id).shape;
    require(sa.rank == 2 && sv.rank == 1 && sv.d0 == sa.rows(),
            "scale_rows: incompatible shapes ", sa.str(), " and ", sv.str());
    const int rows = sa.rows(), cols = sa.cols();
    const bool rg = detail::grad_wanted(t, a.id) || detail::grad_wanted(t, v.id);
    Tensor<S> out = t.alloc(sa, rg);
    {
        const auto& A = t.node(a.id).val;
        const auto& V = t.node(v.id).val;
        auto& O = t.node(out.id).val;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                O[static_cast<size_t>(i) * cols + j] = A[static_cast<size_t>(i) * cols + j] * V[static_cast<size_t>(i)];
    }
    if (rg) {
        const int aid = a.id, vid = v.id, oid = out.id;
        t.node(out.id).back = [aid, vid, oid, rows, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& A = tp.node(aid).val;
            const auto& V = tp.node(vid).val;
            if (tp.node(aid).requires_grad) {
                auto& ga = tp.node(aid).grad;
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j)
                        ga[static_cast<size_t>(i) * cols + j] += g[static_cast<size_t>(i) * cols + j] * V[static_cast<size_t>(i)];
            }
            if (tp.node(vid).requires_grad) {
                auto& gv = tp.node(vid).grad;
                for (int i = 0; i < rows; ++i) {
                    S acc = 0;
                    for (int j = 0; j < cols; ++j)
                        acc += g[static_cast<size_t>(i) * cols + j] * A[static_cast<size_t>(i) * cols + j];
                    gv[static_cast<size_t>(i)] += acc;
                }
            }
        };
    }
    return out;
}

namespace detail {

template <typename S, typename Fwd, typename Bwd>
Tensor<S> unary_op(Tensor<S> a, Fwd fwd, Bwd dfdx_from_xy) {
    Tape<S>& t = *a.tape;
    const bool rg = grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(t.node(a.id).shape, rg);
    {
        const auto& A = t.node(a.id).val;
        auto& O = t.node(out.id).val;
        for (size_t i = 0; i < O.size(); ++i) O[i] = fwd(A[i]);
    }
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid, dfdx_from_xy](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& A = tp.node(aid).val;
            const auto& O = tp.node(oid).val;
            auto& ga = tp.node(aid).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx_from_xy(A[i], O[i]);
        };
    }
    return out;
}

}  // namespace detail

template <typename S>
Tensor<S> sigmoid(Tensor<S> a) {
    return detail::unary_op(
        a, [](S x) { return S(1) / (S(1) + std::exp(-x)); },
        [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> exp_op(Tensor<S> a) {
    return detail::unary_op(a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log_op(Tensor<S> a) {
    return detail::unary_op(a, [](S x) { return std::log(x); },
                            [](S x, S) { return S(1) / x; });
}

/// x * sigmoid(x).
template <typename S>
Tensor<S> silu(Tensor<S> a) {
    return mul(a, sigmoid(a));
}

template <typename S>
Tensor<S> smul(Tensor<S> a, double c) {
    const S cs = static_cast<S>(c);
    return detail::unary_op(a, [cs](S x) { return x * cs; }, [cs](S, S) { return cs; });
}

template <typename S>
Tensor<S> sadd(Tensor<S> a, double c) {
    const S cs = static_cast<S>(c);
    return detail::unary_op(a, [cs](S x) { return x + cs; }, [](S, S) { return S(1); });
}

/// Clamp to [lo, hi]; gradient is passed only strictly inside the interval.
template <typename S>
Tensor<S> clamp_op(Tensor<S> a, double lo, double hi) {
    const S l = static_cast<S>(lo), h = static_cast<S>(hi);
    return detail::unary_op(
        a, [l, h](S x) { return std::min(std::max(x, l), h); },
        [l, h](S x, S) { return (x > l && x < h) ? S(1) : S(0); });
}

/// Elementwise min; ties route the gradient to the first argument.
template <typename S>
Tensor<S> min_op(Tensor<S> a, Tensor<S> b) {
    Tape<S>& t = detail::same_tape(a, b);
    const Shape& sa = t.node(a.id).shape;
    require(sa == t.node(b.id).shape, "min: shape mismatch ", sa.str(), " vs ",
            t.node(b.id).shape.str());
    const bool rg = detail::grad_wanted(t, a.id) || detail::grad_wanted(t, b.id);
    Tensor<S> out = t.alloc(sa, rg);
    {
        const auto& A = t.node(a.id).val;
        const auto& B = t.node(b.id).val;
        auto& O = t.node(out.id).val;
        for (size_t i = 0; i < O.size(); ++i) O[i] = std::min(A[i], B[i]);
    }
    if (rg) {
        const int aid = a.id, bid = b.id, oid = out.id;
        t.node(out.id).back = [aid, bid, oid](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& A = tp.node(aid).val;
            const auto& B = tp.node(bid).val;
            for (size_t i = 0; i < g.size(); ++i) {
                if (A[i] <= B[i]) {
                    if (tp.node(aid).requires_grad) tp.node(aid).grad[i] += g[i];
                } else if (tp.node(bid).requires_grad) {
                    tp.node(bid).grad[i] += g[i];
                }
            }
        };
    }
    return out;
}

/// Softmax over the last axis (each row of a matrix, or a whole vector).
template <typename S>
Tensor<S> softmax(Tensor<S> a) {
    Tape<S>& t = *a.tape;
    const Shape& sa = t.node(a.id).shape;
    require(sa.rank >= 1, "softmax: expected rank >= 1, got ", sa.str());
    const int rows = sa.rank == 2 ? sa.rows() : 1;
    const int cols = sa.rank == 2 ? sa.cols() : sa.d0;
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(sa, rg);
    {
        const auto& A = t.node(a.id).val;
        auto& O = t.node(out.id).val;
        for (int i = 0; i < rows; ++i) {
            const S* x = A.data() + static_cast<size_t>(i) * cols;
            S* y = O.data() + static_cast<size_t>(i) * cols;
            S mx = x[0];
            for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
            S sum = 0;
            for (int j = 0; j < cols; ++j) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            }
            for (int j = 0; j < cols; ++j) y[j] /= sum;
        }
    }
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid, rows, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& Y = tp.node(oid).val;
            auto& ga = tp.node(aid).grad;
            for (int i = 0; i < rows; ++i) {
                const S* gi = g.data() + static_cast<size_t>(i) * cols;
                const S* yi = Y.data() + static_cast<size_t>(i) * cols;
                S dot = 0;
                for (int j = 0; j < cols; ++j) dot += gi[j] * yi[j];
                for (int j = 0; j < cols; ++j)
                    ga[static_cast<size_t>(i) * cols + j] += yi[j] * (gi[j] - dot);
            }
        };
    }
    return out;
}

/// Numerically stable log-softmax over the last axis.
template <typename S>
Tensor<S> log_softmax(Tensor<S> a) {
    Tape<S>& t = *a.tape;
    const Shape& sa = t.node(a.id).shape;
    require(sa.rank >= 1, "log_softmax: expected rank >= 1, got ", sa.str());
    const int rows = sa.rank == 2 ? sa.rows() : 1;
    const int cols = sa.rank == 2 ? sa.cols() : sa.d0;
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(sa, rg);
    {
        const auto& A = t.node(a.id).val;
        auto& O = t.node(out.id).val;
        for (int i = 0; i < rows; ++i) {
            const S* x = A.data() + static_cast<size_t>(i) * cols;
            S* y = O.data() + static_cast<size_t>(i) * cols;
            S mx = x[0];
            for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
            S sum = 0;
            for (int j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
            const S lse = mx + std::log(sum);
            for (int j = 0; j < cols; ++j) y[j] = x[j] - lse;
        }
    }
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid, rows, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& Y = tp.node(oid).val;
            auto& ga = tp.node(aid).grad;
            for (int i = 0; i < rows; ++i) {
                const S* gi = g.data() + static_cast<size_t>(i) * cols;
                const S* yi = Y.data() + static_cast<size_t>(i) * cols;
                S gsum = 0;
                for (int j = 0; j < cols; ++j) gsum += gi[j];
                for (int j = 0; j < cols; ++j)
                    ga[static_cast<size_t>(i) * cols + j] += gi[j] - std::exp(yi[j]) * gsum;
            }
        };
    }
    return out;
}

/// Per-row layer normalization with learned gain/bias.
template <typename S>
Tensor<S> layer_norm(Tensor<S> x, Tensor<S> gamma, Tensor<S> beta, double eps = 1e-5) {
    Tape<S>& t = detail::same_tape(x, gamma);
    detail::same_tape(x, beta);
    const Shape& sx = t.node(x.id).shape;
    const int rows = sx.rank == 2 ? sx.rows() : 1;
    const int cols = sx.rank == 2 ? sx.cols() : sx.d0;
    require(t.node(gamma.id).shape.numel() == cols && t.node(beta.id).shape.numel() == cols,
            "layer_norm: gain/bias length must equal feature dim ", cols);
    const bool rg = detail::grad_wanted(t, x.id) || detail::grad_wanted(t, gamma.id) ||
                    detail::grad_wanted(t, beta.id);
    Tensor<S> out = t.alloc(sx, rg);
    // cache normalized activations and inverse stddev for the backward pass
    auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(rows) * cols);
    auto inv_sd = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
    {
        const auto& X = t.node(x.id).val;
        const auto& G = t.node(gamma.id).val;
        const auto& B = t.node(beta.id).val;
        auto& O = t.node(out.id).val;
        for (int i = 0; i < rows; ++i) {
            const S* xi = X.data() + static_cast<size_t>(i) * cols;
            S mean = 0;
            for (int j = 0; j < cols; ++j) mean += xi[j];
            mean /= static_cast<S>(cols);
            S var = 0;
            for (int j = 0; j < cols; ++j) var += (xi[j] - mean) * (xi[j] - mean);
            var /= static_cast<S>(cols);
            const S isd = S(1) / std::sqrt(var + static_cast<S>(eps));
            (*inv_sd)[static_cast<size_t>(i)] = isd;
            for (int j = 0; j < cols; ++j) {
                const S xh = (xi[j] - mean) * isd;
                (*xhat)[static_cast<size_t>(i) * cols + j] = xh;
                O[static_cast<size_t>(i) * cols + j] = G[static_cast<size_t>(j)] * xh + B[static_cast<size_t>(j)];
            }
        }
    }
    if (rg) {
        const int xid = x.id, gid = gamma.id, bid = beta.id, oid = out.id;
        t.node(out.id).back = [xid, gid, bid, oid, rows, cols, xhat, inv_sd](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            const auto& G = tp.node(gid).val;
            for (int i = 0; i < rows; ++i) {
                const S* gi = g.data() + static_cast<size_t>(i) * cols;
                const S* xh = xhat->data() + static_cast<size_t>(i) * cols;
                if (tp.node(gid).requires_grad) {
                    auto& gg = tp.node(gid).grad;
                    for (int j = 0; j < cols; ++j) gg[static_cast<size_t>(j)] += gi[j] * xh[j];
                }
                if (tp.node(bid).requires_grad) {
                    auto& gb = tp.node(bid).grad;
                    for (int j = 0; j < cols; ++j) gb[static_cast<size_t>(j)] += gi[j];
                }
                if (tp.node(xid).requires_grad) {
                    auto& gx = tp.node(xid).grad;
                    S m1 = 0, m2 = 0;  // mean(g*gamma), mean(g*gamma*xhat)
                    for (int j = 0; j < cols; ++j) {
                        const S gg = gi[j] * G[static_cast<size_t>(j)];
                        m1 += gg;
                        m2 += gg * xh[j];
                    }
                    m1 /= static_cast<S>(cols);
                    m2 /= static_cast<S>(cols);
                    const S isd = (*inv_sd)[static_cast<size_t>(i)];
                    for (int j = 0; j < cols; ++j) {
                        const S gg = gi[j] * G[static_cast<size_t>(j)];
                        gx[static_cast<size_t>(i) * cols + j] += isd * (gg - m1 - xh[j] * m2);
                    }
                }
            }
        };
    }
    return out;
}

/// Row gather from an embedding table: out[i,:] = table[idx[i],:].
template <typename S>
Tensor<S> embedding(Tensor<S> table, std::span<const int> idx) {
    Tape<S>& t = *table.tape;
    const Shape& st = t.node(table.id).shape;
    require(st.rank == 2, "embedding: table must be rank-2, got ", st.str());
    const int rows = static_cast<int>(idx.size());
    const int cols = st.cols();
    for (int i = 0; i < rows; ++i)
        require(idx[static_cast<size_t>(i)] >= 0 && idx[static_cast<size_t>(i)] < st.rows(),
                "embedding: index ", idx[static_cast<size_t>(i)], " out of range [0,", st.rows(), ")");
    const bool rg = detail::grad_wanted(t, table.id);
    Tensor<S> out = t.alloc(Shape::mat(rows, cols), rg);
    std::vector<int> ids(idx.begin(), idx.end());
    {
        const auto& T = t.node(table.id).val;
        auto& O = t.node(out.id).val;
        for (int i = 0; i < rows; ++i)
            std::copy_n(T.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * cols, cols,
                        O.data() + static_cast<size_t>(i) * cols);
    }
    if (rg) {
        const int tid = table.id, oid = out.id;
        t.node(out.id).back = [tid, oid, ids, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& gt = tp.node(tid).grad;
            for (size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < cols; ++j)
                    gt[static_cast<size_t>(ids[i]) * cols + j] += g[i * cols + j];
        };
    }
    return out;
}

/// out[i] = m[i, idx[i]] — per-row column selection (log-prob lookup).
template <typename S>
Tensor<S> gather_cols(Tensor<S> m, std::span<const int> idx) {
    Tape<S>& t = *m.tape;
    const Shape& sm = t.node(m.id).shape;
    require(sm.rank == 2 && static_cast<int>(idx.size()) == sm.rows(),
            "gather_cols: need one column index per row of ", sm.str());
    const int cols = sm.cols();
    for (size_t i = 0; i < idx.size(); ++i)
        require(idx[i] >= 0 && idx[i] < cols, "gather_cols: index ", idx[i],
                " out of range [0,", cols, ")");
    const bool rg = detail::grad_wanted(t, m.id);
    Tensor<S> out = t.alloc(Shape::vec(static_cast<int>(idx.size())), rg);
    std::vector<int> ids(idx.begin(), idx.end());
    {
        const auto& M = t.node(m.id).val;
        auto& O = t.node(out.id).val;
        for (size_t i = 0; i < ids.size(); ++i) O[i] = M[i * cols + static_cast<size_t>(ids[i])];
    }
    if (rg) {
        const int mid = m.id, oid = out.id;
        t.node(out.id).back = [mid, oid, ids, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& gm = tp.node(mid).grad;
            for (size_t i = 0; i < ids.size(); ++i)
                gm[i * cols + static_cast<size_t>(ids[i])] += g[i];
        };
    }
    return out;
}

/// Concatenate rank-2 tensors along rows.
template <typename S>
Tensor<S> concat_rows(std::span<const Tensor<S>> parts) {
    require(!parts.empty(), "concat_rows: empty input");
    Tape<S>& t = *parts[0].tape;
    const int cols = t.node(parts[0].id).shape.cols();
    int rows = 0;
    bool rg = false;
    for (const auto& p : parts) {
        require(p.tape == &t, "concat_rows: tensors on different tapes");
        const Shape& s = t.node(p.id).shape;
        require(s.rank == 2 && s.cols() == cols, "concat_rows: column mismatch, ", s.str(),
                " vs expected cols ", cols);
        rows += s.rows();
        rg = rg || t.node(p.id).requires_grad;
    }
    Tensor<S> out = t.alloc(Shape::mat(rows, cols), rg);
    std::vector<int> ids;
    std::vector<int> offsets;
    {
        auto& O = t.node(out.id).val;
        int r0 = 0;
        for (const auto& p : parts) {
            const auto& P = t.node(p.id).val;
            std::copy(P.begin(), P.end(), O.begin() + static_cast<size_t>(r0) * cols);
            ids.push_back(p.id);
            offsets.push_back(r0);
            r0 += t.node(p.id).shape.rows();
        }
    }
    if (rg) {
        const int oid = out.id;
        t.node(out.id).back = [oid, ids, offsets, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            for (size_t k = 0; k < ids.size(); ++k) {
                auto& n = tp.node(ids[k]);
                if (!n.requires_grad) continue;
                const size_t base = static_cast<size_t>(offsets[k]) * cols;
                for (size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += g[base + i];
            }
        };
    }
    return out;
}

template <typename S>
Tensor<S> concat_rows(std::initializer_list<Tensor<S>> parts) {
    std::vector<Tensor<S>> v(parts);
    return concat_rows(std::span<const Tensor<S>>(v));
}

/// Rows [r0, r1) of a rank-2 tensor.
template <typename S>
Tensor<S> slice_rows(Tensor<S> a, int r0, int r1) {
    Tape<S>& t = *a.tape;
    const Shape& sa = t.node(a.id).shape;
    require(sa.rank == 2 && r0 >= 0 && r1 <= sa.rows() && r0 < r1,
            "slice_rows: bad range [", r0, ",", r1, ") for ", sa.str());
    const int cols = sa.cols();
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(Shape::mat(r1 - r0, cols), rg);
    std::copy_n(t.node(a.id).val.data() + static_cast<size_t>(r0) * cols,
                static_cast<size_t>(r1 - r0) * cols, t.node(out.id).val.data());
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid, r0, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& ga = tp.node(aid).grad;
            const size_t base = static_cast<size_t>(r0) * cols;
            for (size_t i = 0; i < g.size(); ++i) ga[base + i] += g[i];
        };
    }
    return out;
}

/// Columns [c0, c1) of a rank-2 tensor.
template <typename S>
Tensor<S> slice_cols(Tensor<S> a, int c0, int c1) {
    Tape<S>& t = *a.tape;
    const Shape& sa = t.node(a.id).shape;
    require(sa.rank == 2 && c0 >= 0 && c1 <= sa.cols() && c0 < c1,
            "slice_cols: bad range [", c0, ",", c1, ") for ", sa.str());
    const int rows = sa.rows(), cols = sa.cols(), w = c1 - c0;
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(Shape::mat(rows, w), rg);
    {
        const auto& A = t.node(a.id).val;
        auto& O = t.node(out.id).val;
        for (int i = 0; i < rows; ++i)
            std::copy_n(A.data() + static_cast<size_t>(i) * cols + c0, w,
                        O.data() + static_cast<size_t>(i) * w);
    }
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid, rows, cols, c0, w](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& ga = tp.node(aid).grad;
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < w; ++j)
                    ga[static_cast<size_t>(i) * cols + c0 + j] += g[static_cast<size_t>(i) * w + j];
        };
    }
    return out;
}

template <typename S>
Tensor<S> concat_cols(std::span<const Tensor<S>> parts) {
    require(!parts.empty(), "concat_cols: empty input");
    Tape<S>& t = *parts[0].tape;
    const int rows = t.node(parts[0].id).shape.rows();
    int cols = 0;
    bool rg = false;
    for (const auto& p : parts) {
        const Shape& s = t.node(p.id).shape;
        require(s.rank == 2 && s.rows() == rows, "concat_cols: row mismatch ", s.str());
        cols += s.cols();
        rg = rg || t.node(p.id).requires_grad;
    }
    Tensor<S> out = t.alloc(Shape::mat(rows, cols), rg);
    std::vector<int> ids, offs, widths;
    {
        auto& O = t.node(out.id).val;
        int c0 = 0;
        for (const auto& p : parts) {
            const Shape& s = t.node(p.id).shape;
            const auto& P = t.node(p.id).val;
            for (int i = 0; i < rows; ++i)
                std::copy_n(P.data() + static_cast<size_t>(i) * s.cols(), s.cols(),
                            O.data() + static_cast<size_t>(i) * cols + c0);
            ids.push_back(p.id);
            offs.push_back(c0);
            widths.push_back(s.cols());
            c0 += s.cols();
        }
    }
    if (rg) {
        const int oid = out.id;
        t.node(out.id).back = [oid, ids, offs, widths, rows, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            for (size_t k = 0; k < ids.size(); ++k) {
                auto& n = tp.node(ids[k]);
                if (!n.requires_grad) continue;
                const int w = widths[k], c0 = offs[k];
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < w; ++j)
                        n.grad[static_cast<size_t>(i) * w + j] += g[static_cast<size_t>(i) * cols + c0 + j];
            }
        };
    }
    return out;
}

template <typename S>
Tensor<S> concat_cols(std::initializer_list<Tensor<S>> parts) {
    std::vector<Tensor<S>> v(parts);
    return concat_cols(std::span<const Tensor<S>>(v));
}

/// Value copy with the gradient path severed.
template <typename S>
Tensor<S> detach(Tensor<S> a) {
    Tape<S>& t = *a.tape;
    Tensor<S> out = t.alloc(t.node(a.id).shape, false);
    t.node(out.id).val = t.node(a.id).val;
    return out;
}

/// Same data, new shape (numel must match).
template <typename S>
Tensor<S> reshape(Tensor<S> a, Shape shp) {
    Tape<S>& t = *a.tape;
    require(t.node(a.id).shape.numel() == shp.numel(), "reshape: numel mismatch ",
            t.node(a.id).shape.str(), " -> ", shp.str());
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(shp, rg);
    t.node(out.id).val = t.node(a.id).val;
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& ga = tp.node(aid).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    }
    return out;
}

template <typename S>
Tensor<S> sum(Tensor<S> a) {
    Tape<S>& t = *a.tape;
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(Shape::scalar(), rg);
    {
        const auto& A = t.node(a.id).val;
        S acc = 0;
        for (S v : A) acc += v;
        t.node(out.id).val[0] = acc;
    }
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid](Tape<S>& tp) {
            const S g = tp.node(oid).grad[0];
            auto& ga = tp.node(aid).grad;
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        };
    }
    return out;
}

template <typename S>
Tensor<S> mean(Tensor<S> a) {
    const double n = static_cast<double>(a.tape->node(a.id).shape.numel());
    return smul(sum(a), 1.0 / n);
}

/// Column means of a rank-2 tensor (pooling over rows).
template <typename S>
Tensor<S> mean_rows(Tensor<S> a) {
    Tape<S>& t = *a.tape;
    const Shape& sa = t.node(a.id).shape;
    require(sa.rank == 2, "mean_rows: expected rank-2, got ", sa.str());
    const int rows = sa.rows(), cols = sa.cols();
    const bool rg = detail::grad_wanted(t, a.id);
    Tensor<S> out = t.alloc(Shape::vec(cols), rg);
    {
        const auto& A = t.node(a.id).val;
        auto& O = t.node(out.id).val;
        for (int j = 0; j < cols; ++j) {
            S acc = 0;
            for (int i = 0; i < rows; ++i) acc += A[static_cast<size_t>(i) * cols + j];
            O[static_cast<size_t>(j)] = acc / static_cast<S>(rows);
        }
    }
    if (rg) {
        const int aid = a.id, oid = out.id;
        t.node(out.id).back = [aid, oid, rows, cols](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& ga = tp.node(aid).grad;
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    ga[static_cast<size_t>(i) * cols + j] += g[static_cast<size_t>(j)] / static_cast<S>(rows);
        };
    }
    return out;
}

/// Mean squared error over all elements.
template <typename S>
Tensor<S> mse(Tensor<S> a, Tensor<S> b) {
    Tensor<S> d = sub(a, b);
    return mean(mul(d, d));
}

/// Tail cumulative sum of a vector: out[i] = sum_{j >= i} v[j].
template <typename S>
Tensor<S> tail_cumsum(Tensor<S> v) {
    Tape<S>& t = *v.tape;
    const Shape& sv = t.node(v.id).shape;
    require(sv.rank == 1, "tail_cumsum: expected rank-1, got ", sv.str());
    const int n = sv.d0;
    const bool rg = detail::grad_wanted(t, v.id);
    Tensor<S> out = t.alloc(sv, rg);
    {
        const auto& V = t.node(v.id).val;
        auto& O = t.node(out.id).val;
        S acc = 0;
        for (int i = n - 1; i >= 0; --i) {
            acc += V[static_cast<size_t>(i)];
            O[static_cast<size_t>(i)] = acc;
        }
    }
    if (rg) {
        const int vid = v.id, oid = out.id;
        t.node(out.id).back = [vid, oid, n](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& gv = tp.node(vid).grad;
            S acc = 0;
            for (int j = 0; j < n; ++j) {
                acc += g[static_cast<size_t>(j)];  // sum_{i <= j} g[i]
                gv[static_cast<size_t>(j)] += acc;
            }
        };
    }
    return out;
}

/// Straight-through value substitution: forward takes the exact bits of
/// `value_src`; the incoming gradient is routed unchanged to `grad_dst`.
template <typename S>
Tensor<S> straight_through(Tensor<S> grad_dst, Tensor<S> value_src) {
    Tape<S>& t = detail::same_tape(grad_dst, value_src);
    const Shape& s = t.node(value_src.id).shape;
    require(s == t.node(grad_dst.id).shape, "straight_through: shape mismatch ", s.str(),
            " vs ", t.node(grad_dst.id).shape.str());
    const bool rg = detail::grad_wanted(t, grad_dst.id);
    Tensor<S> out = t.alloc(s, rg);
    t.node(out.id).val = t.node(value_src.id).val;
    if (rg) {
        const int did = grad_dst.id, oid = out.id;
        t.node(out.id).back = [did, oid](Tape<S>& tp) {
            const auto& g = tp.node(oid).grad;
            auto& gd = tp.node(did).grad;
            for (size_t i = 0; i < g.size(); ++i) gd[i] += g[i];
        };
    }
    return out;
}

/// Scaled dot-product attention. `add_mask` (optional, rows*rows) is added to
/// the score matrix before the softmax (e.g. -1e9 above the diagonal for
/// causal decoding).
template <typename S>
Tensor<S> attention(Tensor<S> q, Tensor<S> k, Tensor<S> v, double scale,
                    const std::vector<S>* add_mask = nullptr) {
    Tape<S>& t = detail::same_tape(q, k);
    Tensor<S> scores = smul(matmul(q, transpose(k)), scale);
    if (add_mask != nullptr) {
        const Shape& ss = t.node(scores.id).shape;
        require(static_cast<int64_t>(add_mask->size()) == ss.numel(),
                "attention: mask size mismatch for ", ss.str());
        Tensor<S> m = t.constant(ss, std::span<const S>(*add_mask));
        scores = add(scores, m);
    }
    return matmul(softmax(scores), v);
}

template <typename S>
bool all_finite(std::span<const S> xs) {
    for (S x : xs)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace alto
