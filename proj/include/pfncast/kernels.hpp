#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pfncast/tensor.hpp"

// Forward kernels. Every op here is pure, deterministic, and shared between
// the recording graph and plain inference so both paths compute identical
// values.

namespace pfncast::nn {

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: expects rank-2 tensors");
    if (a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: inner dimensions disagree " + a.shape_str() +
                                    " vs " + b.shape_str());
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c = Tensor::zeros({m, n});
    const double* pa = a.data.data();
    const double* pb = b.data.data();
    double* pc = c.data.data();
    for (int64_t i = 0; i < m; ++i) {
        const double* ar = pa + i * k;
        double* cr = pc + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = ar[kk];
            if (av == 0.0) continue;
            const double* br = pb + kk * n;
            for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
    debug_check_finite(c, "matmul");
    return c;
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: expects rank-2 tensor");
    const int64_t m = a.dim(0), n = a.dim(1);
    Tensor t = Tensor::zeros({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) t.data[j * m + i] = a.data[i * n + j];
    return t;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    debug_check_finite(c, "add");
    return c;
}

// a[m x n] + row vector v[n], broadcast over rows.
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    if (v.numel() != a.cols())
        throw std::invalid_argument("add_rowvec: vector length mismatch");
    Tensor c = a;
    const int64_t m = a.rows(), n = a.cols();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) c.data[i * n + j] += v.data[static_cast<size_t>(j)];
    debug_check_finite(c, "add_rowvec");
    return c;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor c = a;
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
    debug_check_finite(c, "mul");
    return c;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (double& v : c.data) v *= s;
    debug_check_finite(c, "scale");
    return c;
}

namespace detail {
inline void softmax_span(const double* x, double* y, int64_t n) {
    double mx = x[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    for (int64_t j = 0; j < n; ++j) y[j] /= sum;
}
}  // namespace detail

/// Softmax along `axis` (negative axes count from the end). Max-subtraction
/// keeps exp() in range for any finite input.
inline Tensor softmax(const Tensor& a, int axis = -1) {
    int r = a.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw std::invalid_argument("softmax: axis out of range");
    Tensor out = a;
    if (r == 1 || axis == r - 1) {
        const int64_t n = a.cols();
        const int64_t m = a.numel() / n;
        for (int64_t i = 0; i < m; ++i)
            detail::softmax_span(a.data.data() + i * n, out.data.data() + i * n, n);
        return out;
    }
    if (r == 2 && axis == 0) {
        Tensor t = transpose(a);
        Tensor s = softmax(t, -1);
        return transpose(s);
    }
    throw std::invalid_argument("softmax: unsupported axis/rank combination");
}

// Softmax over the last axis where mask[i][j]==false pins weight j of row i
// to exactly zero. Rows must have at least one admissible entry.
inline Tensor masked_softmax(const Tensor& a, const BoolMatrix& mask) {
    if (a.rank() != 2 || a.dim(0) != mask.rows || a.dim(1) != mask.cols)
        throw std::invalid_argument("masked_softmax: mask shape mismatch");
    const int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (int64_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < n; ++j)
            if (mask.at(i, j)) mx = std::max(mx, a.data[i * n + j]);
        if (!std::isfinite(mx))
            throw std::invalid_argument("masked_softmax: fully masked row " + std::to_string(i));
        double sum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            if (!mask.at(i, j)) continue;
            double e = std::exp(a.data[i * n + j] - mx);
            out.data[i * n + j] = e;
            sum += e;
        }
        for (int64_t j = 0; j < n; ++j) out.data[i * n + j] /= sum;
    }
    return out;
}

struct LayerNormCache {
    Tensor xhat;               // normalized input before affine
    std::vector<double> rstd;  // 1/sqrt(var+eps) per row
};

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5, LayerNormCache* cache = nullptr) {
    const int64_t n = x.cols();
    const int64_t m = x.numel() / n;
    if (gain.numel() != n || bias.numel() != n)
        throw std::invalid_argument("layer_norm: gain/bias length mismatch");
    Tensor out = Tensor::zeros(x.shape);
    if (cache) {
        cache->xhat = Tensor::zeros(x.shape);
        cache->rstd.assign(static_cast<size_t>(m), 0.0);
    }
    for (int64_t i = 0; i < m; ++i) {
        const double* xr = x.data.data() + i * n;
        double mean = 0.0;
        for (int64_t j = 0; j < n; ++j) mean += xr[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double rstd = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < n; ++j) {
            double xh = (xr[j] - mean) * rstd;
            if (cache) cache->xhat.data[i * n + j] = xh;
            out.data[i * n + j] = gain.data[static_cast<size_t>(j)] * xh +
                                  bias.data[static_cast<size_t>(j)];
        }
        if (cache) cache->rstd[static_cast<size_t>(i)] = rstd;
    }
    debug_check_finite(out, "layer_norm");
    return out;
}

// Exact (erf-based) GELU.
inline double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

inline double gelu_grad_scalar(double x) {
    const double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt2pi = 0.39894228040143267794;
    double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
    double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

inline Tensor gelu(const Tensor& a) {
    Tensor c = a;
    for (double& v : c.data) v = gelu_scalar(v);
    return c;
}

// Gathers rows of a table: out[i] = table[idx[i]].
inline Tensor table_rows(const Tensor& table, const std::vector<int>& idx) {
    if (table.rank() != 2) throw std::invalid_argument("table_rows: table must be rank-2");
    const int64_t d = table.dim(1);
    Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), d});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= table.dim(0))
            throw std::out_of_range("table_rows: index out of range");
        std::copy_n(table.row_ptr(idx[i]), d, out.row_ptr(static_cast<int64_t>(i)));
    }
    return out;
}

inline Tensor col_slice(const Tensor& a, int64_t start, int64_t len) {
    if (a.rank() != 2 || start < 0 || start + len > a.dim(1))
        throw std::invalid_argument("col_slice: range out of bounds");
    const int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({m, len});
    for (int64_t i = 0; i < m; ++i)
        std::copy_n(a.data.data() + i * n + start, len, out.data.data() + i * len);
    return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
    const int64_t m = parts[0].dim(0);
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != m)
            throw std::invalid_argument("concat_cols: row counts disagree");
        total += p.dim(1);
    }
    Tensor out = Tensor::zeros({m, total});
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t w = p.dim(1);
        for (int64_t i = 0; i < m; ++i)
            std::copy_n(p.data.data() + i * w, w, out.data.data() + i * total + off);
        off += w;
    }
    return out;
}

/// Single-head scaled dot-product attention. mask[i][j]==false forbids
/// position i from attending to j; masked logits contribute zero weight.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const BoolMatrix& mask) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw std::invalid_argument("attention: expects rank-2 tensors");
    if (q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0))
        throw std::invalid_argument("attention: q/k/v shapes disagree");
    Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.dim(1))));
    Tensor w = masked_softmax(scores, mask);
    return matmul(w, v);
}

inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    BoolMatrix all(q.dim(0), k.dim(0), true);
    return attention(q, k, v, all);
}

// Mean cross-entropy of `logits` rows listed in `rows` against `labels`
// (parallel to rows). Uses log-sum-exp directly.
inline double cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels,
                                 const std::vector<int>& rows) {
    if (rows.empty()) throw std::invalid_argument("cross_entropy_rows: no rows selected");
    if (labels.size() != rows.size())
        throw std::invalid_argument("cross_entropy_rows: labels/rows length mismatch");
    const int64_t n = logits.cols();
    double total = 0.0;
    for (size_t i = 0; i < rows.size(); ++i) {
        const double* r = logits.row_ptr(rows[i]);
        double mx = r[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        double lse = 0.0;
        for (int64_t j = 0; j < n; ++j) lse += std::exp(r[j] - mx);
        lse = std::log(lse) + mx;
        total += lse - r[labels[i]];
    }
    return total / static_cast<double>(rows.size());
}

}  // namespace pfncast::nn
