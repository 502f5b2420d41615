#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

// Classification metrics. AUC is computed from integer pair/trapezoid counts
// so it agrees with all-pairs Mann-Whitney counting exactly, ties included.

namespace pfncast {

struct ClassificationMetrics {
    double accuracy = 0;
    double balanced_accuracy = 0;
    double f1 = 0;
};

inline ClassificationMetrics metrics(const std::vector<int>& y_true,
                                     const std::vector<int>& y_pred) {
    if (y_true.empty() || y_true.size() != y_pred.size())
        throw std::invalid_argument("metrics: empty or mismatched inputs");
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] == 1)
            (y_pred[i] == 1 ? tp : fn)++;
        else
            (y_pred[i] == 0 ? tn : fp)++;
    }
    ClassificationMetrics m;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(y_true.size());
    const int64_t pos = tp + fn, neg = tn + fp;
    double tpr = pos > 0 ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
    double tnr = neg > 0 ? static_cast<double>(tn) / static_cast<double>(neg) : 0.0;
    m.balanced_accuracy = (tpr + tnr) / 2.0;
    double precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    double recall = pos > 0 ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
    m.f1 = (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return m;
}

struct RocPoint {
    double threshold = 0;
    double fpr = 0;
    double tpr = 0;
};

struct RocResult {
    double auc = 0;
    std::vector<RocPoint> points;  // one per distinct score, plus the (0,0) origin
};

/// ROC sweep over distinct score thresholds (score >= t predicts positive).
/// The trapezoid sum is accumulated in integers, which makes it identical to
/// the doubled Mann-Whitney U statistic; ties contribute diagonal segments.
inline RocResult roc_auc(const std::vector<int>& y_true, const std::vector<double>& scores) {
    if (y_true.empty() || y_true.size() != scores.size())
        throw std::invalid_argument("roc_auc: empty or mismatched inputs");
    int64_t n_pos = 0, n_neg = 0;
    for (int y : y_true) (y == 1 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: both classes must be present");

    std::vector<size_t> order(y_true.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    RocResult out;
    out.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    int64_t tp = 0, fp = 0;
    int64_t prev_tp = 0, prev_fp = 0;
    int64_t twice_area = 0;  // sum of d_fp * (tp_prev + tp_cur)
    size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (y_true[order[i]] == 1 ? tp : fp)++;
            ++i;
        }
        twice_area += (fp - prev_fp) * (tp + prev_tp);
        out.points.push_back({s, static_cast<double>(fp) / static_cast<double>(n_neg),
                              static_cast<double>(tp) / static_cast<double>(n_pos)});
        prev_tp = tp;
        prev_fp = fp;
    }
    out.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(n_pos) *
                                                 static_cast<double>(n_neg));
    return out;
}

}  // namespace pfncast
