#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "shield/common.hpp"

namespace shield {

/// Dense row-major tensor of 64-bit floats. Rank is arbitrary but the
/// network only ever needs rank 1 and 2.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw ShapeError("Tensor: data length does not match shape");
    }

    static Tensor zeros(size_t r, size_t c) { return Tensor({r, c}); }

    static Tensor row(std::initializer_list<double> xs) {
        return Tensor({1, xs.size()}, std::vector<double>(xs));
    }

    static Tensor vec(std::vector<double> xs) {
        size_t n = xs.size();
        return Tensor({n}, std::move(xs));
    }

    static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
        size_t r = rows.size();
        size_t c = r == 0 ? 0 : rows[0].size();
        Tensor t({r, c});
        for (size_t i = 0; i < r; ++i) {
            if (rows[i].size() != c) throw ShapeError("from_rows: ragged input");
            std::copy(rows[i].begin(), rows[i].end(), t.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
        }
        return t;
    }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t numel() const { return data_.size(); }
    size_t rank() const { return shape_.size(); }

    /// Rows/cols of a rank-2 tensor; a rank-1 tensor is treated as 1×n.
    size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    size_t cols() const {
        if (rank() == 2) return shape_[1];
        if (rank() == 1) return shape_[0];
        throw ShapeError("rows/cols on rank-" + std::to_string(rank()) + " tensor");
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(size_t i, size_t j) { return data_[i * cols() + j]; }
    double at(size_t i, size_t j) const { return data_[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Rejects NaN and +inf everywhere; -inf is tolerated only when
    /// `allow_neg_inf` is set (masked logits are the single legal source).
    void check_finite(const char* where, bool allow_neg_inf = false) const {
        for (double x : data_) {
            if (std::isnan(x) || x == std::numeric_limits<double>::infinity() ||
                (!allow_neg_inf && x == -std::numeric_limits<double>::infinity()))
                throw ValueError(std::string("non-finite value in ") + where);
        }
    }

    static size_t count(const std::vector<size_t>& shape) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        return n;
    }

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

namespace kernels {

/// C += A(r×k) * B(k×c). The i-k-j order keeps the inner loop contiguous.
inline void matmul_acc(const double* a, const double* b, double* c, size_t r, size_t k, size_t cc) {
    for (size_t i = 0; i < r; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * cc;
        for (size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * cc;
            for (size_t j = 0; j < cc; ++j) ci[j] += av * bp[j];
        }
    }
}

/// C += A(r×k) * B(c×k)^T.
inline void matmul_nt_acc(const double* a, const double* b, double* c, size_t r, size_t k, size_t cc) {
    for (size_t i = 0; i < r; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * cc;
        for (size_t j = 0; j < cc; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

/// C += A(k×r)^T * B(k×c).
inline void matmul_tn_acc(const double* a, const double* b, double* c, size_t r, size_t k, size_t cc) {
    for (size_t p = 0; p < k; ++p) {
        const double* ap = a + p * r;
        const double* bp = b + p * cc;
        for (size_t i = 0; i < r; ++i) {
            const double av = ap[i];
            if (av == 0.0) continue;
            double* ci = c + i * cc;
            for (size_t j = 0; j < cc; ++j) ci[j] += av * bp[j];
        }
    }
}

}  // namespace kernels

}  // namespace shield
