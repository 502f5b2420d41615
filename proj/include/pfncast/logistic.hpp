#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pfncast/tensor.hpp"

namespace pfncast {

/// Weighted logistic regression trained by full-batch gradient descent with
/// L2 on the weights (not the bias). A sanity floor, not a contender.
struct LogisticModel {
    std::vector<double> weights;
    double bias = 0.0;
};

inline LogisticModel fit_logistic(const Tensor& x, const std::vector<int>& y, double lr,
                                  int epochs, double l2,
                                  std::array<double, 2> class_weights = {1.0, 1.0}) {
    if (x.rank() != 2 || static_cast<int64_t>(y.size()) != x.dim(0))
        throw std::invalid_argument("fit_logistic: shape mismatch");
    if (epochs < 0) throw std::invalid_argument("fit_logistic: negative epochs");
    const int64_t n = x.dim(0), f = x.dim(1);
    LogisticModel m;
    m.weights.assign(static_cast<size_t>(f), 0.0);

    for (int e = 0; e < epochs; ++e) {
        std::vector<double> gw(static_cast<size_t>(f), 0.0);
        double gb = 0.0, wt = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            double z = m.bias;
            const double* row = x.row_ptr(i);
            for (int64_t j = 0; j < f; ++j) z += m.weights[static_cast<size_t>(j)] * row[j];
            double p = 1.0 / (1.0 + std::exp(-z));
            double w = class_weights[y[static_cast<size_t>(i)] == 1 ? 1 : 0];
            double g = w * (p - y[static_cast<size_t>(i)]);
            for (int64_t j = 0; j < f; ++j) gw[static_cast<size_t>(j)] += g * row[j];
            gb += g;
            wt += w;
        }
        for (int64_t j = 0; j < f; ++j)
            m.weights[static_cast<size_t>(j)] -=
                lr * (gw[static_cast<size_t>(j)] / wt + l2 * m.weights[static_cast<size_t>(j)]);
        m.bias -= lr * gb / wt;
    }
    return m;
}

inline std::vector<double> predict_proba(const LogisticModel& m, const Tensor& rows) {
    if (rows.rank() != 2 || rows.dim(1) != static_cast<int64_t>(m.weights.size()))
        throw std::invalid_argument("logistic predict: feature count mismatch");
    std::vector<double> out(static_cast<size_t>(rows.dim(0)));
    for (int64_t i = 0; i < rows.dim(0); ++i) {
        double z = m.bias;
        const double* row = rows.row_ptr(i);
        for (size_t j = 0; j < m.weights.size(); ++j) z += m.weights[j] * row[j];
        out[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-z));
    }
    return out;
}

}  // namespace pfncast
