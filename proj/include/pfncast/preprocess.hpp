#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pfncast/tensor.hpp"

// Input preprocessing: feature-wise standardization, sign-preserving log
// scaling for outlier-heavy columns, Yeo-Johnson power transform, and the
// deterministic ensemble-member plan family. Statistics are fitted on
// training rows only; missing cells (NaN) are median-imputed.

namespace pfncast {

inline double yeo_johnson(double x, double lambda) {
    if (x >= 0.0) {
        if (std::fabs(lambda) < 1e-12) return std::log1p(x);
        return (std::pow(x + 1.0, lambda) - 1.0) / lambda;
    }
    if (std::fabs(lambda - 2.0) < 1e-12) return -std::log1p(-x);
    return -(std::pow(1.0 - x, 2.0 - lambda) - 1.0) / (2.0 - lambda);
}

inline double signed_log1p(double x) { return x >= 0 ? std::log1p(x) : -std::log1p(-x); }

namespace detail {

inline double quantile_sorted(const std::vector<double>& s, double q) {
    if (s.empty()) return 0.0;
    if (s.size() == 1) return s[0];
    double pos = q * static_cast<double>(s.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, s.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return s[lo] + (s[hi] - s[lo]) * frac;
}

// Nearest-rank quantile; a single extreme value cannot drag the bracket, so
// the IQR in the outlier rule stays robust on short columns.
inline double quantile_nearest(const std::vector<double>& s, double q) {
    if (s.empty()) return 0.0;
    double rank = std::ceil(q * static_cast<double>(s.size()));
    size_t idx = rank <= 1.0 ? 0 : static_cast<size_t>(rank) - 1;
    return s[std::min(idx, s.size() - 1)];
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double pop_std(const std::vector<double>& v, double mean) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size()));
}

// Profile log-likelihood of the Yeo-Johnson parameter under a normal model.
inline double yj_log_likelihood(const std::vector<double>& x, double lambda) {
    std::vector<double> t(x.size());
    double jac = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        t[i] = yeo_johnson(x[i], lambda);
        jac += (x[i] >= 0 ? 1.0 : -1.0) * std::log1p(std::fabs(x[i]));
    }
    double mean = mean_of(t);
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    var /= static_cast<double>(t.size());
    if (!(var > 1e-300) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
    return -0.5 * static_cast<double>(t.size()) * std::log(var) + (lambda - 1.0) * jac;
}

}  // namespace detail

/// Maximum-likelihood Yeo-Johnson lambda by golden-section search on [-2, 2].
/// Columns with fewer than three distinct finite values fall back to the
/// identity transform.
inline double fit_yeo_johnson(const std::vector<double>& column, bool warn_degenerate = true) {
    std::vector<double> vals;
    vals.reserve(column.size());
    for (double v : column)
        if (std::isfinite(v)) vals.push_back(v);
    std::vector<double> distinct = vals;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) {
        if (warn_degenerate)
            std::cerr << "fit_yeo_johnson: degenerate column, falling back to lambda=1\n";
        return 1.0;
    }

    const double gr = 0.6180339887498949;
    double a = -2.0, b = 2.0;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = detail::yj_log_likelihood(vals, c);
    double fd = detail::yj_log_likelihood(vals, d);
    while (b - a > 1e-4) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = detail::yj_log_likelihood(vals, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = detail::yj_log_likelihood(vals, d);
        }
    }
    return 0.5 * (a + b);
}

/// Fitted per-column state. `mean`/`std` describe the canonical (no power
/// transform) path after any log scaling; `pt_mean`/`pt_std` describe the
/// Yeo-Johnson path so either plan standardizes correctly.
struct ColumnStats1 {
    double mean = 0, std = 0;
    double median = 0, iqr = 0;
    bool outlier = false;
    bool constant = false;
    double lambda = 1.0;
    double fill = 0;
    double pt_mean = 0, pt_std = 0;
};

struct ColumnStats {
    std::vector<ColumnStats1> cols;
    size_t n_features() const { return cols.size(); }
};

/// An ensemble member's deterministic input variation.
struct PreprocessPlan {
    std::vector<int> column_perm;  // output column j reads source column_perm[j]
    bool apply_power_transform = false;
    int label_rotation = 0;

    static PreprocessPlan identity(int n_features) {
        PreprocessPlan p;
        p.column_perm.resize(static_cast<size_t>(n_features));
        for (int j = 0; j < n_features; ++j) p.column_perm[static_cast<size_t>(j)] = j;
        return p;
    }
};

// Outlier rule: a column is log-scaled when any value sits further than
// 10 * (IQR + 1e-9) from the median.
inline ColumnStats fit(const Tensor& train_rows) {
    if (train_rows.rank() != 2 || train_rows.dim(0) < 2)
        throw std::invalid_argument("preprocess::fit: need at least 2 rows");
    const int64_t n = train_rows.dim(0), f = train_rows.dim(1);
    ColumnStats stats;
    stats.cols.resize(static_cast<size_t>(f));
    for (int64_t j = 0; j < f; ++j) {
        ColumnStats1& c = stats.cols[static_cast<size_t>(j)];
        std::vector<double> vals;
        vals.reserve(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            double v = train_rows.at(i, j);
            if (std::isfinite(v)) vals.push_back(v);
        }
        if (vals.empty()) {
            c = ColumnStats1{};
            c.constant = true;
            continue;
        }
        std::vector<double> sorted = vals;
        std::sort(sorted.begin(), sorted.end());
        c.median = detail::quantile_sorted(sorted, 0.5);
        c.iqr = detail::quantile_nearest(sorted, 0.75) - detail::quantile_nearest(sorted, 0.25);
        c.fill = c.median;
        double max_dev = 0.0;
        for (double v : vals) max_dev = std::max(max_dev, std::fabs(v - c.median));
        c.outlier = max_dev > 10.0 * (c.iqr + 1e-9);

        std::vector<double> t = vals;
        if (c.outlier)
            for (double& v : t) v = signed_log1p(v);

        std::vector<double> distinct = t;
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        c.constant = distinct.size() < 2;
        c.lambda = distinct.size() >= 3 ? fit_yeo_johnson(t, false) : 1.0;

        c.mean = detail::mean_of(t);
        c.std = detail::pop_std(t, c.mean);

        std::vector<double> u = t;
        for (double& v : u) v = yeo_johnson(v, c.lambda);
        c.pt_mean = detail::mean_of(u);
        c.pt_std = detail::pop_std(u, c.pt_mean);
    }
    return stats;
}

/// Column pipeline: impute -> log scale if flagged -> optional Yeo-Johnson
/// -> standardize -> permute columns.
inline Tensor transform(const Tensor& rows, const ColumnStats& stats, const PreprocessPlan& plan) {
    if (rows.rank() != 2 || rows.dim(1) != static_cast<int64_t>(stats.n_features()))
        throw std::invalid_argument("preprocess::transform: column count mismatch");
    if (plan.column_perm.size() != stats.n_features())
        throw std::invalid_argument("preprocess::transform: plan column count mismatch");
    const int64_t n = rows.dim(0), f = rows.dim(1);
    Tensor staged = Tensor::zeros({n, f});
    for (int64_t j = 0; j < f; ++j) {
        const ColumnStats1& c = stats.cols[static_cast<size_t>(j)];
        const double mean = plan.apply_power_transform ? c.pt_mean : c.mean;
        const double sd = plan.apply_power_transform ? c.pt_std : c.std;
        for (int64_t i = 0; i < n; ++i) {
            double v = rows.at(i, j);
            if (!std::isfinite(v)) v = c.fill;
            if (c.outlier) v = signed_log1p(v);
            if (plan.apply_power_transform) v = yeo_johnson(v, c.lambda);
            staged.at(i, j) = sd > 0 ? (v - mean) / sd : 0.0;
        }
    }
    Tensor out = Tensor::zeros({n, f});
    for (int64_t j = 0; j < f; ++j) {
        int src = plan.column_perm[static_cast<size_t>(j)];
        for (int64_t i = 0; i < n; ++i) out.at(i, j) = staged.at(i, src);
    }
    return out;
}

inline Tensor transform(const Tensor& rows, const ColumnStats& stats) {
    return transform(rows, stats, PreprocessPlan::identity(static_cast<int>(stats.n_features())));
}

/// Member i shifts features cyclically by floor(i*f/m), applies the power
/// transform iff i is odd, and rotates class labels by i mod k. Member 0 is
/// the canonical identity plan.
inline std::vector<PreprocessPlan> build_ensemble_members(int n_features, int n_classes,
                                                          int n_members) {
    if (n_members < 1) throw std::invalid_argument("build_ensemble_members: n_members must be >= 1");
    if (n_features < 1 || n_classes < 1)
        throw std::invalid_argument("build_ensemble_members: bad feature/class count");
    std::vector<PreprocessPlan> plans;
    plans.reserve(static_cast<size_t>(n_members));
    for (int i = 0; i < n_members; ++i) {
        PreprocessPlan p;
        int shift = static_cast<int>((static_cast<int64_t>(i) * n_features) / n_members);
        p.column_perm.resize(static_cast<size_t>(n_features));
        for (int j = 0; j < n_features; ++j)
            p.column_perm[static_cast<size_t>(j)] = (j + shift) % n_features;
        p.apply_power_transform = (i % 2) == 1;
        p.label_rotation = i % n_classes;
        plans.push_back(std::move(p));
    }
    return plans;
}

}  // namespace pfncast
