#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/tensor.hpp"

// In-house gradient-boosted trees for binary targets: logistic loss, exact
// greedy splits over sorted unique feature values, Newton leaf values, and
// per-class example weights. Missing cells (NaN) route to the child with the
// larger training cover. Deterministic: identical inputs give bit-identical
// models (ties break toward the lowest feature index, then lowest threshold).

namespace pfncast {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    bool default_left = true;
    double value = 0.0;  // leaf log-odds contribution (before learning rate)
    double cover = 0.0;  // sum of hessians reaching the node
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root

    double predict_margin(const double* row) const {
        int cur = 0;
        while (nodes[static_cast<size_t>(cur)].feature >= 0) {
            const TreeNode& n = nodes[static_cast<size_t>(cur)];
            double v = row[n.feature];
            bool go_left = std::isnan(v) ? n.default_left : v < n.threshold;
            cur = go_left ? n.left : n.right;
        }
        return nodes[static_cast<size_t>(cur)].value;
    }
};

struct GbdtParams {
    int n_rounds = 200;
    int max_depth = 4;
    double learning_rate = 0.1;
    double lambda_l2 = 1.0;
    double min_child_weight = 1.0;
    std::optional<double> base_score;  // default: prior log-odds of the training labels
};

struct GbdtModel {
    std::vector<Tree> trees;
    double base_score = 0.0;
    GbdtParams params;
    std::array<double, 2> class_weights{1.0, 1.0};
    int n_features = 0;
    std::vector<double> round_losses;  // weighted train loss after each round

    bool fitted() const { return n_features > 0; }
};

inline std::array<double, 2> balanced_class_weights(const std::vector<int>& y) {
    double n0 = 0, n1 = 0;
    for (int v : y) (v == 1 ? n1 : n0)++;
    const double n = n0 + n1;
    return {n / (2.0 * n0), n / (2.0 * n1)};
}

namespace detail_gbdt {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    bool default_left = true;
};

struct TreeBuilder {
    const Tensor& x;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const GbdtParams& params;
    std::vector<TreeNode> nodes;

    // Order rows by (value, row index) per feature once; reused at every node.
    std::vector<std::vector<int>> sorted_by_feature;

    TreeBuilder(const Tensor& x_, const std::vector<double>& g_, const std::vector<double>& h_,
                const GbdtParams& p_)
        : x(x_), grad(g_), hess(h_), params(p_) {
        const int64_t f = x.dim(1);
        sorted_by_feature.resize(static_cast<size_t>(f));
        for (int64_t j = 0; j < f; ++j) {
            auto& ord = sorted_by_feature[static_cast<size_t>(j)];
            ord.reserve(static_cast<size_t>(x.dim(0)));
            for (int i = 0; i < x.dim(0); ++i)
                if (!std::isnan(x.at(i, j))) ord.push_back(i);
            std::sort(ord.begin(), ord.end(), [&](int a, int b) {
                double va = x.at(a, j), vb = x.at(b, j);
                if (va != vb) return va < vb;
                return a < b;
            });
        }
    }

    int build(const std::vector<char>& in_node, double g_total, double h_total, int depth) {
        SplitChoice best;
        if (depth < params.max_depth) best = find_split(in_node, g_total, h_total);

        if (!best.found) {
            TreeNode leaf;
            leaf.value = -g_total / (h_total + params.lambda_l2);
            leaf.cover = h_total;
            nodes.push_back(leaf);
            return static_cast<int>(nodes.size()) - 1;
        }

        std::vector<char> left_mask(in_node.size(), 0), right_mask(in_node.size(), 0);
        double gl = 0, hl = 0, gr = 0, hr = 0;
        for (size_t i = 0; i < in_node.size(); ++i) {
            if (!in_node[i]) continue;
            double v = x.at(static_cast<int64_t>(i), best.feature);
            bool go_left = std::isnan(v) ? best.default_left : v < best.threshold;
            if (go_left) {
                left_mask[i] = 1;
                gl += grad[i];
                hl += hess[i];
            } else {
                right_mask[i] = 1;
                gr += grad[i];
                hr += hess[i];
            }
        }

        const int my_id = static_cast<int>(nodes.size());
        TreeNode internal;
        internal.feature = best.feature;
        internal.threshold = best.threshold;
        internal.default_left = best.default_left;
        internal.cover = h_total;
        nodes.push_back(internal);
        int left_id = build(left_mask, gl, hl, depth + 1);
        int right_id = build(right_mask, gr, hr, depth + 1);
        nodes[static_cast<size_t>(my_id)].left = left_id;
        nodes[static_cast<size_t>(my_id)].right = right_id;
        return my_id;
    }

    SplitChoice find_split(const std::vector<char>& in_node, double g_total, double h_total) {
        SplitChoice best;
        const double lambda = params.lambda_l2;
        const double parent_score = g_total * g_total / (h_total + lambda);

        for (int64_t j = 0; j < x.dim(1); ++j) {
            const auto& ord = sorted_by_feature[static_cast<size_t>(j)];
            // non-missing prefix stats plus the missing bucket
            double g_miss = g_total, h_miss = h_total;
            double g_seen = 0, h_seen = 0;
            for (int i : ord) {
                if (!in_node[static_cast<size_t>(i)]) continue;
                g_seen += grad[static_cast<size_t>(i)];
                h_seen += hess[static_cast<size_t>(i)];
            }
            g_miss -= g_seen;
            h_miss -= h_seen;

            double gl = 0, hl = 0;
            double prev_value = 0;
            bool have_prev = false;
            for (size_t t = 0; t < ord.size(); ++t) {
                int i = ord[t];
                if (!in_node[static_cast<size_t>(i)]) continue;
                double v = x.at(i, j);
                if (have_prev && v != prev_value) {
                    double thr = 0.5 * (prev_value + v);
                    // midpoints of adjacent floats can collapse; skip those
                    if (thr > prev_value) {
                        consider(best, j, thr, gl, hl, g_seen - gl, h_seen - hl, g_miss, h_miss,
                                 g_total, h_total, parent_score, lambda);
                    }
                }
                gl += grad[static_cast<size_t>(i)];
                hl += hess[static_cast<size_t>(i)];
                prev_value = v;
                have_prev = true;
            }
        }
        return best;
    }

    void consider(SplitChoice& best, int64_t feature, double thr, double gl_nm, double hl_nm,
                  double gr_nm, double hr_nm, double g_miss, double h_miss, double g_total,
                  double h_total, double parent_score, double lambda) {
        // missing rows follow the side with the larger non-missing cover
        const bool miss_left = hl_nm >= hr_nm;
        double gl = gl_nm + (miss_left ? g_miss : 0.0);
        double hl = hl_nm + (miss_left ? h_miss : 0.0);
        double gr = g_total - gl;
        double hr = h_total - hl;
        if (hl < params.min_child_weight || hr < params.min_child_weight) return;
        double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score);
        if (gain <= 0.0) return;
        if (best.found) {
            // strictly-greater comparison keeps the lowest feature/threshold on ties
            if (gain <= best.gain) return;
        }
        best.found = true;
        best.feature = static_cast<int>(feature);
        best.threshold = thr;
        best.gain = gain;
        best.default_left = miss_left;
    }
};

}  // namespace detail_gbdt

inline GbdtModel fit_gbdt(const Tensor& x, const std::vector<int>& y, const GbdtParams& params,
                          std::array<double, 2> class_weights = {1.0, 1.0}) {
    if (x.rank() != 2 || x.dim(0) < 2)
        throw std::invalid_argument("fit_gbdt: need at least two rows");
    if (static_cast<int64_t>(y.size()) != x.dim(0))
        throw std::invalid_argument("fit_gbdt: label count mismatch");
    int64_t n_pos = 0, n_neg = 0;
    for (int v : y) {
        if (v != 0 && v != 1) throw std::invalid_argument("fit_gbdt: labels must be binary");
        (v == 1 ? n_pos : n_neg)++;
    }
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("fit_gbdt: training data has a single class");

    const int64_t n = x.dim(0);
    GbdtModel model;
    model.params = params;
    model.class_weights = class_weights;
    model.n_features = static_cast<int>(x.dim(1));

    std::vector<double> w(static_cast<size_t>(n));
    for (size_t i = 0; i < w.size(); ++i) w[i] = class_weights[y[i] == 1 ? 1 : 0];

    if (params.base_score.has_value()) {
        model.base_score = *params.base_score;
    } else {
        double wy = 0, wt = 0;
        for (size_t i = 0; i < w.size(); ++i) {
            wy += w[i] * y[i];
            wt += w[i];
        }
        double p = wy / wt;
        model.base_score = std::log(p / (1.0 - p));
    }

    std::vector<double> margin(static_cast<size_t>(n), model.base_score);
    std::vector<double> grad(static_cast<size_t>(n)), hess(static_cast<size_t>(n));
    std::vector<char> all(static_cast<size_t>(n), 1);

    model.round_losses.reserve(static_cast<size_t>(params.n_rounds));
    for (int round = 0; round < params.n_rounds; ++round) {
        double g_total = 0, h_total = 0;
        for (size_t i = 0; i < grad.size(); ++i) {
            double p = detail_gbdt::sigmoid(margin[i]);
            grad[i] = w[i] * (p - y[i]);
            hess[i] = w[i] * p * (1.0 - p);
            g_total += grad[i];
            h_total += hess[i];
        }
        detail_gbdt::TreeBuilder builder(x, grad, hess, params);
        builder.build(all, g_total, h_total, 0);
        Tree tree;
        tree.nodes = std::move(builder.nodes);
        for (int64_t i = 0; i < n; ++i)
            margin[static_cast<size_t>(i)] += params.learning_rate * tree.predict_margin(x.row_ptr(i));
        model.trees.push_back(std::move(tree));

        double loss = 0, wt = 0;
        for (size_t i = 0; i < margin.size(); ++i) {
            double p = detail_gbdt::sigmoid(margin[i]);
            p = std::min(std::max(p, 1e-15), 1.0 - 1e-15);
            loss -= w[i] * (y[i] * std::log(p) + (1 - y[i]) * std::log(1.0 - p));
            wt += w[i];
        }
        model.round_losses.push_back(loss / wt);
    }
    return model;
}

inline std::vector<double> predict_margin(const GbdtModel& model, const Tensor& rows) {
    if (!model.fitted()) throw std::invalid_argument("predict_margin: model not fitted");
    if (rows.rank() != 2 || rows.dim(1) != model.n_features)
        throw std::invalid_argument("predict_margin: expected " +
                                    std::to_string(model.n_features) + " features, got " +
                                    std::to_string(rows.dim(1)));
    std::vector<double> out(static_cast<size_t>(rows.dim(0)), model.base_score);
    for (int64_t i = 0; i < rows.dim(0); ++i) {
        double acc = 0.0;
        for (const Tree& t : model.trees) acc += t.predict_margin(rows.row_ptr(i));
        out[static_cast<size_t>(i)] += model.params.learning_rate * acc;
    }
    return out;
}

inline std::vector<double> predict_proba(const GbdtModel& model, const Tensor& rows) {
    std::vector<double> m = predict_margin(model, rows);
    for (double& v : m) v = detail_gbdt::sigmoid(v);
    return m;
}

}  // namespace pfncast
