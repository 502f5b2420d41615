#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/gbdt.hpp"
#include "pfncast/metrics.hpp"
#include "pfncast/rng.hpp"
#include "pfncast/tensor.hpp"

// Feature attribution. tree_shap runs the path-dependent polynomial-time
// recursion over the boosted trees, with node covers as conditioning
// weights; permutation_importance is the model-agnostic fallback for
// predictors without tree structure.

namespace pfncast {

/// Margin-space feature contributions for one row.
/// base + sum(contributions) equals the predicted margin (local accuracy).
struct Attribution {
    std::vector<double> contributions;
    double base = 0.0;
};

namespace detail_shap {

struct PathElem {
    int feature = -1;
    double zero_frac = 0.0;
    double one_frac = 0.0;
    double pweight = 0.0;
};

inline void extend(std::vector<PathElem>& path, double pz, double po, int feature) {
    const int l = static_cast<int>(path.size());
    path.push_back({feature, pz, po, l == 0 ? 1.0 : 0.0});
    for (int i = l - 1; i >= 0; --i) {
        path[static_cast<size_t>(i + 1)].pweight +=
            po * path[static_cast<size_t>(i)].pweight * (i + 1) / static_cast<double>(l + 1);
        path[static_cast<size_t>(i)].pweight =
            pz * path[static_cast<size_t>(i)].pweight * (l - i) / static_cast<double>(l + 1);
    }
}

inline std::vector<PathElem> unwind(std::vector<PathElem> path, int i) {
    const int l = static_cast<int>(path.size()) - 1;
    const double one = path[static_cast<size_t>(i)].one_frac;
    const double zero = path[static_cast<size_t>(i)].zero_frac;
    double next = path[static_cast<size_t>(l)].pweight;
    for (int j = l - 1; j >= 0; --j) {
        if (one != 0.0) {
            double tmp = path[static_cast<size_t>(j)].pweight;
            path[static_cast<size_t>(j)].pweight =
                next * (l + 1) / (static_cast<double>(j + 1) * one);
            next = tmp - path[static_cast<size_t>(j)].pweight * zero * (l - j) /
                             static_cast<double>(l + 1);
        } else {
            path[static_cast<size_t>(j)].pweight =
                path[static_cast<size_t>(j)].pweight * (l + 1) /
                (zero * static_cast<double>(l - j));
        }
    }
    for (int j = i; j < l; ++j) {
        path[static_cast<size_t>(j)].feature = path[static_cast<size_t>(j + 1)].feature;
        path[static_cast<size_t>(j)].zero_frac = path[static_cast<size_t>(j + 1)].zero_frac;
        path[static_cast<size_t>(j)].one_frac = path[static_cast<size_t>(j + 1)].one_frac;
    }
    path.pop_back();
    return path;
}

inline double unwound_sum(const std::vector<PathElem>& path, int i) {
    auto rest = unwind(path, i);
    double s = 0.0;
    for (const auto& e : rest) s += e.pweight;
    return s;
}

inline void recurse(const Tree& tree, const double* row, std::vector<double>& phi, int node,
                    std::vector<PathElem> path, double pz, double po, int parent_feature) {
    extend(path, pz, po, parent_feature);
    const TreeNode& n = tree.nodes[static_cast<size_t>(node)];
    if (n.feature < 0) {
        for (int i = 1; i < static_cast<int>(path.size()); ++i) {
            const auto& e = path[static_cast<size_t>(i)];
            phi[static_cast<size_t>(e.feature)] +=
                unwound_sum(path, i) * (e.one_frac - e.zero_frac) * n.value;
        }
        return;
    }
    double v = row[n.feature];
    bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
    int hot = go_left ? n.left : n.right;
    int cold = go_left ? n.right : n.left;

    double iz = 1.0, io = 1.0;
    int k = -1;
    for (int i = 1; i < static_cast<int>(path.size()); ++i)
        if (path[static_cast<size_t>(i)].feature == n.feature) {
            k = i;
            break;
        }
    if (k >= 0) {
        iz = path[static_cast<size_t>(k)].zero_frac;
        io = path[static_cast<size_t>(k)].one_frac;
        path = unwind(path, k);
    }
    const double cover = n.cover;
    const double hot_cover = tree.nodes[static_cast<size_t>(hot)].cover;
    const double cold_cover = tree.nodes[static_cast<size_t>(cold)].cover;
    recurse(tree, row, phi, hot, path, iz * hot_cover / cover, io, n.feature);
    recurse(tree, row, phi, cold, path, iz * cold_cover / cover, 0.0, n.feature);
}

inline double expected_value(const Tree& tree, int node) {
    const TreeNode& n = tree.nodes[static_cast<size_t>(node)];
    if (n.feature < 0) return n.value;
    double wl = tree.nodes[static_cast<size_t>(n.left)].cover;
    double wr = tree.nodes[static_cast<size_t>(n.right)].cover;
    return (wl * expected_value(tree, n.left) + wr * expected_value(tree, n.right)) / (wl + wr);
}

}  // namespace detail_shap

inline Attribution tree_shap(const GbdtModel& model, const Tensor& row) {
    if (!model.fitted()) throw std::invalid_argument("tree_shap: model not fitted");
    if (row.numel() != model.n_features)
        throw std::invalid_argument("tree_shap: feature count mismatch");
    Attribution att;
    att.contributions.assign(static_cast<size_t>(model.n_features), 0.0);
    att.base = model.base_score;
    std::vector<double> phi(static_cast<size_t>(model.n_features), 0.0);
    for (const Tree& tree : model.trees) {
        detail_shap::recurse(tree, row.data.data(), phi, 0, {}, 1.0, 1.0, -1);
        att.base += model.params.learning_rate * detail_shap::expected_value(tree, 0);
    }
    for (size_t j = 0; j < phi.size(); ++j)
        att.contributions[j] = model.params.learning_rate * phi[j];
    return att;
}

/// Mean absolute SHAP contribution per feature over a dataset; the ranking
/// statistic behind top-k selection.
inline std::vector<double> mean_abs_shap(const GbdtModel& model, const Tensor& rows) {
    std::vector<double> scores(static_cast<size_t>(model.n_features), 0.0);
    Tensor row = Tensor::zeros({model.n_features});
    for (int64_t i = 0; i < rows.dim(0); ++i) {
        std::copy_n(rows.row_ptr(i), model.n_features, row.data.data());
        Attribution att = tree_shap(model, row);
        for (size_t j = 0; j < scores.size(); ++j) scores[j] += std::fabs(att.contributions[j]);
    }
    for (double& s : scores) s /= static_cast<double>(rows.dim(0));
    return scores;
}

enum class ImportanceMetric { Auc, BalancedAccuracy };

/// Metric drop when one column is shuffled, averaged over repeats.
/// `predict` maps a feature matrix to positive-class probabilities.
inline std::vector<double> permutation_importance(
    const std::function<std::vector<double>(const Tensor&)>& predict, const Tensor& x,
    const std::vector<int>& y, ImportanceMetric metric, int n_repeats, uint64_t seed) {
    if (n_repeats < 1) throw std::invalid_argument("permutation_importance: n_repeats >= 1");
    auto score_of = [&](const Tensor& data) {
        std::vector<double> proba = predict(data);
        if (metric == ImportanceMetric::Auc) return roc_auc(y, proba).auc;
        std::vector<int> pred(proba.size());
        for (size_t i = 0; i < proba.size(); ++i) pred[i] = proba[i] >= 0.5 ? 1 : 0;
        return metrics(y, pred).balanced_accuracy;
    };
    const double base = score_of(x);
    const int64_t n = x.dim(0), f = x.dim(1);
    std::vector<double> scores(static_cast<size_t>(f), 0.0);
    for (int64_t j = 0; j < f; ++j) {
        for (int r = 0; r < n_repeats; ++r) {
            Rng rng(mix_seed(seed, static_cast<uint64_t>(j), static_cast<uint64_t>(r)));
            std::vector<int64_t> perm(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
            rng.shuffle(perm);
            Tensor shuffled = x;
            for (int64_t i = 0; i < n; ++i)
                shuffled.at(i, j) = x.at(perm[static_cast<size_t>(i)], j);
            scores[static_cast<size_t>(j)] += base - score_of(shuffled);
        }
        scores[static_cast<size_t>(j)] /= static_cast<double>(n_repeats);
    }
    return scores;
}

/// Indices of the k best-scoring features, descending; ties prefer the
/// lower index.
inline std::vector<int> select_top_k(const std::vector<double>& scores, int k) {
    if (k < 0 || static_cast<size_t>(k) > scores.size())
        throw std::invalid_argument("select_top_k: k exceeds feature count");
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    idx.resize(static_cast<size_t>(k));
    return idx;
}

}  // namespace pfncast
