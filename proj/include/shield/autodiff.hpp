#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "shield/tensor.hpp"

namespace shield::ad {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Boolean mask over a 2-D tensor; true = forbidden.
struct Mask {
    size_t rows = 0, cols = 0;
    std::vector<uint8_t> v;

    Mask() = default;
    Mask(size_t r, size_t c, uint8_t fill = 0) : rows(r), cols(c), v(r * c, fill) {}

    uint8_t& at(size_t i, size_t j) { return v[i * cols + j]; }
    uint8_t at(size_t i, size_t j) const { return v[i * cols + j]; }
};

struct Node;
using Var = std::shared_ptr<Node>;

/// One tape entry: a value, its gradient slot, and the closure that
/// pushes the gradient into the parents.
struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    explicit Node(Tensor v) : value(std::move(v)) {}

    void ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    }

    void zero_grad() {
        ensure_grad();
        std::fill(grad.data(), grad.data() + grad.numel(), 0.0);
    }
};

namespace detail {

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Scope guard that disables tape recording (greedy rollouts, evaluation).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline Var constant(Tensor v) { return std::make_shared<Node>(std::move(v)); }

inline Var param(Tensor v) {
    auto n = std::make_shared<Node>(std::move(v));
    n->requires_grad = true;
    n->ensure_grad();
    return n;
}

namespace detail {

inline Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back,
                const char* where, bool allow_neg_inf = false) {
    value.check_finite(where, allow_neg_inf);
    auto n = std::make_shared<Node>(std::move(value));
    if (grad_mode()) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p->requires_grad;
        if (rg) {
            n->requires_grad = true;
            n->ensure_grad();
            n->parents = std::move(parents);
            n->backward_fn = std::move(back);
        }
    }
    return n;
}

inline void need_2d(const Var& x, const char* who) {
    if (x->value.rank() > 2) throw ShapeError(std::string(who) + ": rank-2 tensor required");
}

}  // namespace detail

/// Runs reverse-mode accumulation from a scalar root. Parent grads are
/// zero-initialised except for persistent parameters, whose grads keep
/// accumulating until PolicyParams::zero_grad.
inline void backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    // Post-order: parents precede children, so reversed order is topological
    // from the root down.
    for (Node* n : order)
        if (n != root.get()) n->ensure_grad();
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    detail::need_2d(a, "matmul"), detail::need_2d(b, "matmul");
    const size_t r = a->value.rows(), k = a->value.cols(), c = b->value.cols();
    if (b->value.rows() != k) throw ShapeError("matmul: inner dimensions disagree");
    Tensor out({r, c});
    kernels::matmul_acc(a->value.data(), b->value.data(), out.data(), r, k, c);
    return detail::make(std::move(out), {a, b},
        [a = a.get(), b = b.get(), r, k, c](Node& n) {
            if (a->requires_grad)
                kernels::matmul_nt_acc(n.grad.data(), b->value.data(), a->grad.data(), r, c, k);
            if (b->requires_grad)
                kernels::matmul_tn_acc(a->value.data(), n.grad.data(), b->grad.data(), c, r, k);
        },
        "matmul");
}

/// a(r×k) * b(c×k)^T -> r×c.
inline Var matmul_nt(const Var& a, const Var& b) {
    const size_t r = a->value.rows(), k = a->value.cols(), c = b->value.rows();
    if (b->value.cols() != k) throw ShapeError("matmul_nt: inner dimensions disagree");
    Tensor out({r, c});
    kernels::matmul_nt_acc(a->value.data(), b->value.data(), out.data(), r, k, c);
    return detail::make(std::move(out), {a, b},
        [a = a.get(), b = b.get(), r, k, c](Node& n) {
            if (a->requires_grad)
                kernels::matmul_acc(n.grad.data(), b->value.data(), a->grad.data(), r, c, k);
            if (b->requires_grad)
                kernels::matmul_tn_acc(n.grad.data(), a->value.data(), b->grad.data(), k, r, c);
        },
        "matmul_nt");
}

/// a(k×r)^T * b(k×c) -> r×c.
inline Var matmul_tn(const Var& a, const Var& b) {
    const size_t k = a->value.rows(), r = a->value.cols(), c = b->value.cols();
    if (b->value.rows() != k) throw ShapeError("matmul_tn: inner dimensions disagree");
    Tensor out({r, c});
    kernels::matmul_tn_acc(a->value.data(), b->value.data(), out.data(), r, k, c);
    return detail::make(std::move(out), {a, b},
        [a = a.get(), b = b.get(), r, k, c](Node& n) {
            if (a->requires_grad)
                kernels::matmul_nt_acc(b->value.data(), n.grad.data(), a->grad.data(), k, c, r);
            if (b->requires_grad)
                kernels::matmul_acc(a->value.data(), n.grad.data(), b->grad.data(), k, r, c);
        },
        "matmul_tn");
}

inline Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeError("add: shape mismatch");
    Tensor out(a->value.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return detail::make(std::move(out), {a, b},
        [a = a.get(), b = b.get()](Node& n) {
            if (a->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
            if (b->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i];
        },
        "add");
}

inline Var sub(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeError("sub: shape mismatch");
    Tensor out(a->value.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return detail::make(std::move(out), {a, b},
        [a = a.get(), b = b.get()](Node& n) {
            if (a->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
            if (b->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] -= n.grad[i];
        },
        "sub");
}

inline Var mul(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ShapeError("mul: shape mismatch");
    Tensor out(a->value.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return detail::make(std::move(out), {a, b},
        [a = a.get(), b = b.get()](Node& n) {
            if (a->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * b->value[i];
            if (b->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i] * a->value[i];
        },
        "mul");
}

/// x(n×d) + v(d) broadcast over rows.
inline Var add_rowvec(const Var& x, const Var& v) {
    const size_t r = x->value.rows(), c = x->value.cols();
    if (v->value.numel() != c) throw ShapeError("add_rowvec: vector length mismatch");
    Tensor out(x->value.shape());
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] = x->value[i * c + j] + v->value[j];
    return detail::make(std::move(out), {x, v},
        [x = x.get(), v = v.get(), r, c](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < r * c; ++i) x->grad[i] += n.grad[i];
            if (v->requires_grad)
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j) v->grad[j] += n.grad[i * c + j];
        },
        "add_rowvec");
}

inline Var scale(const Var& x, double c) {
    Tensor out(x->value.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * c;
    return detail::make(std::move(out), {x},
        [x = x.get(), c](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) x->grad[i] += n.grad[i] * c;
        },
        "scale");
}

/// out[i,:] = x[i,:] * s[i], with s an n×1 (or length-n) tensor.
inline Var row_scale(const Var& x, const Var& s) {
    const size_t r = x->value.rows(), c = x->value.cols();
    if (s->value.numel() != r) throw ShapeError("row_scale: scale length mismatch");
    Tensor out(x->value.shape());
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] = x->value[i * c + j] * s->value[i];
    return detail::make(std::move(out), {x, s},
        [x = x.get(), s = s.get(), r, c](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j) x->grad[i * c + j] += n.grad[i * c + j] * s->value[i];
            if (s->requires_grad)
                for (size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (size_t j = 0; j < c; ++j) acc += n.grad[i * c + j] * x->value[i * c + j];
                    s->grad[i] += acc;
                }
        },
        "row_scale");
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input");
    const size_t c = parts[0]->value.cols();
    size_t r = 0;
    for (const auto& p : parts) {
        if (p->value.cols() != c) throw ShapeError("concat_rows: column mismatch");
        r += p->value.rows();
    }
    Tensor out({r, c});
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data(), p->value.data() + p->value.numel(), out.data() + off);
        off += p->value.numel();
    }
    std::vector<Var> parents = parts;
    return detail::make(std::move(out), std::move(parents),
        [](Node& n) {
            size_t off = 0;
            for (auto& p : n.parents) {
                if (p->requires_grad)
                    for (size_t i = 0; i < p->value.numel(); ++i) p->grad[i] += n.grad[off + i];
                off += p->value.numel();
            }
        },
        "concat_rows");
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input");
    const size_t r = parts[0]->value.rows();
    size_t c = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != r) throw ShapeError("concat_cols: row mismatch");
        c += p->value.cols();
    }
    Tensor out({r, c});
    size_t off = 0;
    for (const auto& p : parts) {
        const size_t pc = p->value.cols();
        for (size_t i = 0; i < r; ++i)
            std::copy(p->value.data() + i * pc, p->value.data() + (i + 1) * pc,
                      out.data() + i * c + off);
        off += pc;
    }
    std::vector<Var> parents = parts;
    return detail::make(std::move(out), std::move(parents),
        [r, c](Node& n) {
            size_t off = 0;
            for (auto& p : n.parents) {
                const size_t pc = p->value.cols();
                if (p->requires_grad)
                    for (size_t i = 0; i < r; ++i)
                        for (size_t j = 0; j < pc; ++j) p->grad[i * pc + j] += n.grad[i * c + off + j];
                off += pc;
            }
        },
        "concat_cols");
}

inline Var slice_cols(const Var& x, size_t from, size_t to) {
    const size_t r = x->value.rows(), c = x->value.cols();
    if (from >= to || to > c) throw ShapeError("slice_cols: bad range");
    const size_t w = to - from;
    Tensor out({r, w});
    for (size_t i = 0; i < r; ++i)
        std::copy(x->value.data() + i * c + from, x->value.data() + i * c + to, out.data() + i * w);
    return detail::make(std::move(out), {x},
        [x = x.get(), from, w, c, r](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < w; ++j) x->grad[i * c + from + j] += n.grad[i * w + j];
        },
        "slice_cols", true);
}

inline Var gather_rows(const Var& x, std::vector<size_t> idx) {
    const size_t c = x->value.cols(), r = x->value.rows();
    for (size_t i : idx)
        if (i >= r) throw ShapeError("gather_rows: index out of range");
    Tensor out({idx.size(), c});
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy(x->value.data() + idx[i] * c, x->value.data() + (idx[i] + 1) * c, out.data() + i * c);
    return detail::make(std::move(out), {x},
        [x = x.get(), idx = std::move(idx), c](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < idx.size(); ++i)
                    for (size_t j = 0; j < c; ++j) x->grad[idx[i] * c + j] += n.grad[i * c + j];
        },
        "gather_rows", true);
}

/// Copies `base` and adds delta rows at the given row indices. Rows not
/// referenced by `idx` are bitwise copies of `base` — this is what makes the
/// conditional-computation identity branch exact.
inline Var scatter_add_rows(const Var& base, const Var& delta, std::vector<size_t> idx) {
    const size_t r = base->value.rows(), c = base->value.cols();
    if (delta->value.cols() != c || delta->value.rows() != idx.size())
        throw ShapeError("scatter_add_rows: delta shape mismatch");
    for (size_t i : idx)
        if (i >= r) throw ShapeError("scatter_add_rows: index out of range");
    Tensor out = base->value;
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = 0; j < c; ++j) out[idx[i] * c + j] += delta->value[i * c + j];
    return detail::make(std::move(out), {base, delta},
        [b = base.get(), d = delta.get(), idx = std::move(idx), c](Node& n) {
            if (b->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i];
            if (d->requires_grad)
                for (size_t i = 0; i < idx.size(); ++i)
                    for (size_t j = 0; j < c; ++j) d->grad[i * c + j] += n.grad[idx[i] * c + j];
        },
        "scatter_add_rows");
}

/// out[i] = x[i, idx[i]] as an n×1 tensor.
inline Var gather_cols_per_row(const Var& x, std::vector<size_t> idx) {
    const size_t r = x->value.rows(), c = x->value.cols();
    if (idx.size() != r) throw ShapeError("gather_cols_per_row: index length mismatch");
    for (size_t j : idx)
        if (j >= c) throw ShapeError("gather_cols_per_row: index out of range");
    Tensor out({r, 1});
    for (size_t i = 0; i < r; ++i) out[i] = x->value[i * c + idx[i]];
    return detail::make(std::move(out), {x},
        [x = x.get(), idx = std::move(idx), c](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < idx.size(); ++i) x->grad[i * c + idx[i]] += n.grad[i];
        },
        "gather_cols_per_row");
}

/// Row-major reshape; data order is unchanged.
inline Var reshape(const Var& x, std::vector<size_t> shape) {
    if (Tensor::count(shape) != x->value.numel()) throw ShapeError("reshape: element count mismatch");
    Tensor out(std::move(shape), std::vector<double>(x->value.data(), x->value.data() + x->value.numel()));
    return detail::make(std::move(out), {x},
        [x = x.get()](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) x->grad[i] += n.grad[i];
        },
        "reshape", true);
}

/// Sets entries where mask is true to `value` (typically -inf before a
/// softmax, matching the "otherwise -inf" branch of the selection rule).
inline Var mask_fill(const Var& x, const Mask& mask, double value) {
    const size_t r = x->value.rows(), c = x->value.cols();
    if (mask.rows != r || mask.cols != c) throw ShapeError("mask_fill: mask shape mismatch");
    Tensor out = x->value;
    for (size_t i = 0; i < r * c; ++i)
        if (mask.v[i]) out[i] = value;
    return detail::make(std::move(out), {x},
        [x = x.get(), m = mask.v](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i)
                    if (!m[i]) x->grad[i] += n.grad[i];
        },
        "mask_fill", true);
}

/// Numerically-stable softmax along `axis` of a rank-2 tensor (rank-1 is
/// treated as a single row). -inf entries map to exactly 0; a fully -inf
/// slice raises DegenerateDistributionError.
inline Var softmax(const Var& x, int axis = 1) {
    const size_t r = x->value.rows(), c = x->value.cols();
    if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
    Tensor out(x->value.rank() == 1 ? std::vector<size_t>{c} : std::vector<size_t>{r, c});
    const size_t slices = axis == 1 ? r : c;
    const size_t len = axis == 1 ? c : r;
    auto at = [&](size_t s, size_t t) { return axis == 1 ? s * c + t : t * c + s; };
    for (size_t s = 0; s < slices; ++s) {
        double mx = kNegInf;
        for (size_t t = 0; t < len; ++t) mx = std::max(mx, x->value[at(s, t)]);
        if (mx == kNegInf)
            throw DegenerateDistributionError("softmax: slice is entirely -inf");
        double sum = 0.0;
        for (size_t t = 0; t < len; ++t) {
            const double e = std::exp(x->value[at(s, t)] - mx);
            out[at(s, t)] = e;
            sum += e;
        }
        for (size_t t = 0; t < len; ++t) out[at(s, t)] /= sum;
    }
    return detail::make(std::move(out), {x},
        [x = x.get(), r, c, axis, slices, len, at](Node& n) {
            if (!x->requires_grad) return;
            (void)r;
            for (size_t s = 0; s < slices; ++s) {
                double dot = 0.0;
                for (size_t t = 0; t < len; ++t) dot += n.grad[at(s, t)] * n.value[at(s, t)];
                for (size_t t = 0; t < len; ++t)
                    x->grad[at(s, t)] += n.value[at(s, t)] * (n.grad[at(s, t)] - dot);
            }
        },
        "softmax");
}

inline Var tanh(const Var& x) {
    Tensor out(x->value.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x->value[i]);
    return detail::make(std::move(out), {x},
        [x = x.get()](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i)
                    x->grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
        },
        "tanh");
}

inline Var relu(const Var& x) {
    Tensor out(x->value.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    return detail::make(std::move(out), {x},
        [x = x.get()](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i)
                    if (x->value[i] > 0.0) x->grad[i] += n.grad[i];
        },
        "relu");
}

inline Var log(const Var& x) {
    Tensor out(x->value.shape());
    for (size_t i = 0; i < out.numel(); ++i) {
        if (!(x->value[i] > 0.0)) throw ValueError("log: non-positive input");
        out[i] = std::log(x->value[i]);
    }
    return detail::make(std::move(out), {x},
        [x = x.get()](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < n.grad.numel(); ++i) x->grad[i] += n.grad[i] / x->value[i];
        },
        "log");
}

/// Per-row normalization to zero mean / unit variance (eps=1e-6 inside the
/// square root), then elementwise affine with gain and bias.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
    constexpr double kEps = 1e-6;
    const size_t r = x->value.rows(), c = x->value.cols();
    if (c < 2) throw ShapeError("layer_norm: needs at least 2 features");
    if (gain->value.numel() != c || bias->value.numel() != c)
        throw ShapeError("layer_norm: gain/bias length mismatch");
    Tensor out(x->value.shape());
    std::vector<double> inv(r), xhat(r * c);
    for (size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += x->value[i * c + j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) {
            const double d = x->value[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        inv[i] = 1.0 / std::sqrt(var + kEps);
        for (size_t j = 0; j < c; ++j) {
            const double h = (x->value[i * c + j] - mean) * inv[i];
            xhat[i * c + j] = h;
            out[i * c + j] = h * gain->value[j] + bias->value[j];
        }
    }
    return detail::make(std::move(out), {x, gain, bias},
        [x = x.get(), g = gain.get(), b = bias.get(), inv = std::move(inv),
         xhat = std::move(xhat), r, c](Node& n) {
            for (size_t i = 0; i < r; ++i) {
                if (g->requires_grad || b->requires_grad)
                    for (size_t j = 0; j < c; ++j) {
                        if (g->requires_grad) g->grad[j] += n.grad[i * c + j] * xhat[i * c + j];
                        if (b->requires_grad) b->grad[j] += n.grad[i * c + j];
                    }
                if (!x->requires_grad) continue;
                double sum_d = 0.0, sum_dh = 0.0;
                for (size_t j = 0; j < c; ++j) {
                    const double dh = n.grad[i * c + j] * g->value[j];
                    sum_d += dh;
                    sum_dh += dh * xhat[i * c + j];
                }
                const double m = 1.0 / static_cast<double>(c);
                for (size_t j = 0; j < c; ++j) {
                    const double dh = n.grad[i * c + j] * g->value[j];
                    x->grad[i * c + j] += inv[i] * (dh - m * sum_d - xhat[i * c + j] * m * sum_dh);
                }
            }
        },
        "layer_norm");
}

inline Var sum_all(const Var& x) {
    double s = 0.0;
    for (size_t i = 0; i < x->value.numel(); ++i) s += x->value[i];
    return detail::make(Tensor({1, 1}, {s}), {x},
        [x = x.get()](Node& n) {
            if (x->requires_grad)
                for (size_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += n.grad[0];
        },
        "sum_all");
}

// ---------------------------------------------------------------------------
// Composites
// ---------------------------------------------------------------------------

/// out[i,j] = sum_k x[i,k] w[k,j] + b[j].
inline Var linear(const Var& x, const Var& w, const Var& b) {
    return add_rowvec(matmul(x, w), b);
}

/// Scaled dot-product attention over `heads` heads: per head,
/// softmax(q_h k_h^T / sqrt(d/heads)) v_h, masked logits forced to -inf,
/// heads re-concatenated. Projections live with the caller.
inline Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads,
                                const Mask& mask) {
    const size_t d = q->value.cols();
    const size_t a = q->value.rows(), n = k->value.rows();
    if (k->value.cols() != d || v->value.cols() != d)
        throw ShapeError("multi_head_attention: dimension mismatch");
    if (v->value.rows() != n) throw ShapeError("multi_head_attention: key/value count mismatch");
    if (heads <= 0 || d % static_cast<size_t>(heads) != 0)
        throw ShapeError("multi_head_attention: dim not divisible by heads");
    if (mask.rows != a || mask.cols != n)
        throw ShapeError("multi_head_attention: mask shape mismatch");
    const size_t dh = d / static_cast<size_t>(heads);
    std::vector<Var> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const size_t lo = static_cast<size_t>(h) * dh, hi = lo + dh;
        Var qh = slice_cols(q, lo, hi), kh = slice_cols(k, lo, hi), vh = slice_cols(v, lo, hi);
        Var scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        scores = mask_fill(scores, mask, kNegInf);
        outs.push_back(matmul(softmax(scores, 1), vh));
    }
    return heads == 1 ? outs[0] : concat_cols(outs);
}

}  // namespace shield::ad
