#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/rng.hpp"
#include "pfncast/tensor.hpp"

// Synthetic-prior task stream. Each task is a small supervised dataset drawn
// from a distribution over hypotheses (random MLPs by default); scalar
// targets are cut into class intervals, optionally offset to make the
// classes imbalanced.

namespace pfncast {

enum class IntervalMode { QuantileUniform, RandomOffset };

struct PriorConfig {
    int n_samples_min = 24, n_samples_max = 160;
    int n_features_min = 2, n_features_max = 30;
    int n_classes_max = 10;
    // random-MLP hypothesis generator
    int depth_min = 1, depth_max = 3;
    int width_min = 4, width_max = 16;
    double weight_scale = 1.0;
    double gaussian_input_fraction = 0.7;  // remaining features are uniform
    double noise_sigma = 0.1;
    IntervalMode imbalance = IntervalMode::RandomOffset;

    void validate() const {
        if (n_samples_min < 4 || n_samples_max < n_samples_min)
            throw std::invalid_argument("prior: bad n_samples range");
        if (n_features_min < 1 || n_features_max < n_features_min)
            throw std::invalid_argument("prior: bad n_features range");
        if (n_classes_max < 2) throw std::invalid_argument("prior: n_classes_max must be >= 2");
        if (depth_min < 1 || depth_max < depth_min)
            throw std::invalid_argument("prior: bad depth range");
        if (width_min < 1 || width_max < width_min)
            throw std::invalid_argument("prior: bad width range");
        if (noise_sigma < 0) throw std::invalid_argument("prior: negative noise sigma");
    }
};

/// One prior-sampled dataset. The first `cut` rows are the context split,
/// the rest are queries.
struct SyntheticTask {
    Tensor x;                  // n x f
    std::vector<int> y;        // contiguous labels, remapped by first occurrence
    int cut = 0;
    std::vector<double> raw_yhat;
    int n_classes = 0;
};

/// Interval discretization of scalar targets. Boundaries are order
/// statistics, so quantile-uniform labeling depends only on ranks.
inline std::vector<int> discretize_labels(const std::vector<double>& yhat, int n_classes,
                                          IntervalMode mode, Rng* rng = nullptr) {
    if (n_classes < 2) throw std::invalid_argument("discretize_labels: n_classes must be >= 2");
    if (yhat.empty()) throw std::invalid_argument("discretize_labels: empty input");
    for (double v : yhat)
        if (!std::isfinite(v)) throw std::invalid_argument("discretize_labels: non-finite target");

    std::vector<double> sorted = yhat;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back())
        throw std::invalid_argument("discretize_labels: all targets identical, no valid boundary");

    const size_t n = yhat.size();
    std::vector<double> bounds;
    bounds.reserve(static_cast<size_t>(n_classes) - 1);
    if (mode == IntervalMode::QuantileUniform) {
        for (int k = 1; k < n_classes; ++k) {
            size_t pos = (n * static_cast<size_t>(k)) / static_cast<size_t>(n_classes);
            pos = std::min(pos, n - 1);
            bounds.push_back(sorted[pos]);
        }
    } else {
        if (!rng) throw std::invalid_argument("discretize_labels: random-offset mode needs rng");
        std::vector<double> qs(static_cast<size_t>(n_classes) - 1);
        for (double& q : qs) q = rng->uniform();
        std::sort(qs.begin(), qs.end());
        for (double q : qs) {
            size_t pos = std::min(static_cast<size_t>(q * static_cast<double>(n)), n - 1);
            bounds.push_back(sorted[pos]);
        }
    }

    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) {
        int k = 0;
        for (double b : bounds)
            if (yhat[i] >= b) ++k;
        labels[i] = k;
    }
    return labels;
}

namespace detail {

// y = MLP(x) with tanh hidden activations and Gaussian weights.
struct RandomMlp {
    std::vector<Tensor> weights;  // layer l: in x out
    std::vector<Tensor> biases;

    static RandomMlp sample(Rng& rng, int n_in, int depth, int width, double scale) {
        RandomMlp m;
        int in = n_in;
        for (int l = 0; l < depth; ++l) {
            int out = (l == depth - 1) ? 1 : width;
            Tensor w = Tensor::zeros({in, out});
            double sd = scale / std::sqrt(static_cast<double>(in));
            for (double& v : w.data) v = rng.normal(0.0, sd);
            Tensor b = Tensor::zeros({out});
            for (double& v : b.data) v = rng.normal(0.0, 0.2 * scale);
            m.weights.push_back(std::move(w));
            m.biases.push_back(std::move(b));
            in = out;
        }
        return m;
    }

    double eval(const double* x, int n_in) const {
        std::vector<double> cur(x, x + n_in);
        for (size_t l = 0; l < weights.size(); ++l) {
            const Tensor& w = weights[l];
            std::vector<double> next(static_cast<size_t>(w.dim(1)), 0.0);
            for (int64_t j = 0; j < w.dim(1); ++j) {
                double s = biases[l].data[static_cast<size_t>(j)];
                for (int64_t i = 0; i < w.dim(0); ++i) s += cur[static_cast<size_t>(i)] * w.at(i, j);
                next[static_cast<size_t>(j)] = (l + 1 < weights.size()) ? std::tanh(s) : s;
            }
            cur = std::move(next);
        }
        return cur[0];
    }
};

inline std::vector<int> remap_by_first_occurrence(const std::vector<int>& raw, int* k_out) {
    std::map<int, int> seen;
    std::vector<int> out(raw.size());
    int next = 0;
    for (size_t i = 0; i < raw.size(); ++i) {
        auto it = seen.find(raw[i]);
        if (it == seen.end()) it = seen.emplace(raw[i], next++).first;
        out[i] = it->second;
    }
    if (k_out) *k_out = next;
    return out;
}

}  // namespace detail

/// Draws one synthetic task: sizes, a random MLP hypothesis, inputs, noisy
/// scalar targets, interval labels, and a context/query cut. Tasks that
/// collapse to a single class are resampled a bounded number of times.
inline SyntheticTask sample_task(Rng& rng, const PriorConfig& cfg) {
    cfg.validate();
    constexpr int kMaxRetries = 16;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        const int n = static_cast<int>(rng.uniform_int(cfg.n_samples_min, cfg.n_samples_max));
        const int f = static_cast<int>(rng.uniform_int(cfg.n_features_min, cfg.n_features_max));
        const int depth = static_cast<int>(rng.uniform_int(cfg.depth_min, cfg.depth_max));
        const int width = static_cast<int>(rng.uniform_int(cfg.width_min, cfg.width_max));
        const int k = static_cast<int>(rng.uniform_int(2, cfg.n_classes_max));

        std::vector<bool> gaussian_col(static_cast<size_t>(f));
        for (size_t j = 0; j < gaussian_col.size(); ++j)
            gaussian_col[j] = rng.bernoulli(cfg.gaussian_input_fraction);

        Tensor x = Tensor::zeros({n, f});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < f; ++j)
                x.at(i, j) = gaussian_col[static_cast<size_t>(j)]
                                 ? rng.normal()
                                 : rng.uniform(-1.7320508075688772, 1.7320508075688772);

        auto mlp = detail::RandomMlp::sample(rng, f, depth, width, cfg.weight_scale);
        std::vector<double> yhat(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i)
            yhat[static_cast<size_t>(i)] =
                mlp.eval(x.row_ptr(i), f) + (cfg.noise_sigma > 0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0);

        bool degenerate = true;
        for (double v : yhat)
            if (v != yhat[0]) {
                degenerate = false;
                break;
            }
        if (degenerate) continue;

        std::vector<int> raw = discretize_labels(yhat, k, cfg.imbalance, &rng);
        SyntheticTask task;
        task.y = detail::remap_by_first_occurrence(raw, &task.n_classes);
        if (task.n_classes < 2) continue;

        task.x = std::move(x);
        task.raw_yhat = std::move(yhat);
        int lo = std::max(1, static_cast<int>(std::ceil(0.1 * n)));
        int hi = std::min(n - 1, static_cast<int>(std::floor(0.9 * n)));
        task.cut = static_cast<int>(rng.uniform_int(lo, hi));
        return task;
    }
    throw std::runtime_error("sample_task: degenerate prior draws exceeded retry budget");
}

// ---------------------------------------------------------------------------
// Enumerable prior for exact Bayes
// ---------------------------------------------------------------------------

/// A finite hypothesis space over a fixed input grid, with label-flip noise
/// as the likelihood model. Small enough to integrate by direct summation.
struct DiscreteHypothesisPrior {
    Tensor grid;                              // g x f point coordinates
    std::vector<std::vector<int>> hypotheses; // H x g labelings
    std::vector<double> prior_probs;          // H, sums to 1
    int n_classes = 2;
    double flip_eps = 0.1;

    int n_points() const { return static_cast<int>(grid.dim(0)); }
    int n_hypotheses() const { return static_cast<int>(hypotheses.size()); }

    void validate() const {
        if (hypotheses.size() != prior_probs.size())
            throw std::invalid_argument("prior: hypothesis/probability count mismatch");
        if (hypotheses.empty()) throw std::invalid_argument("prior: empty hypothesis set");
        double sum = 0.0;
        for (double p : prior_probs) {
            if (p < 0) throw std::invalid_argument("prior: negative prior probability");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-12)
            throw std::invalid_argument("prior: probabilities must sum to 1");
        for (const auto& h : hypotheses)
            if (static_cast<int>(h.size()) != n_points())
                throw std::invalid_argument("prior: hypothesis length mismatch");
        if (flip_eps < 0 || flip_eps >= 1)
            throw std::invalid_argument("prior: flip_eps out of range");
    }
};

/// Exact posterior predictive by finite summation: for each query point,
/// sum p(y|x,h) * p(D|h) * p(h) over hypotheses and normalize.
inline Tensor exact_ppd(const DiscreteHypothesisPrior& prior,
                        const std::vector<std::pair<int, int>>& d_train,
                        const std::vector<int>& x_test) {
    prior.validate();
    const int k = prior.n_classes;
    const double eps = prior.flip_eps;
    auto obs_prob = [&](int predicted, int observed) {
        return observed == predicted ? 1.0 - eps : eps / static_cast<double>(k - 1);
    };

    const int h_count = prior.n_hypotheses();
    std::vector<double> evidence(static_cast<size_t>(h_count));
    double total = 0.0;
    for (int h = 0; h < h_count; ++h) {
        double lik = prior.prior_probs[static_cast<size_t>(h)];
        for (const auto& [xi, yi] : d_train) {
            if (xi < 0 || xi >= prior.n_points())
                throw std::invalid_argument("exact_ppd: train point outside grid");
            lik *= obs_prob(prior.hypotheses[static_cast<size_t>(h)][static_cast<size_t>(xi)], yi);
        }
        evidence[static_cast<size_t>(h)] = lik;
        total += lik;
    }
    if (total <= 0.0)
        throw std::runtime_error("exact_ppd: zero total evidence, no hypothesis explains the data");

    Tensor out = Tensor::zeros({static_cast<int64_t>(x_test.size()), k});
    for (size_t q = 0; q < x_test.size(); ++q) {
        if (x_test[q] < 0 || x_test[q] >= prior.n_points())
            throw std::invalid_argument("exact_ppd: query point outside grid");
        double row_sum = 0.0;
        for (int c = 0; c < k; ++c) {
            double p = 0.0;
            for (int h = 0; h < h_count; ++h)
                p += evidence[static_cast<size_t>(h)] *
                     obs_prob(prior.hypotheses[static_cast<size_t>(h)][static_cast<size_t>(x_test[q])], c);
            out.at(static_cast<int64_t>(q), c) = p;
            row_sum += p;
        }
        for (int c = 0; c < k; ++c) out.at(static_cast<int64_t>(q), c) /= row_sum;
    }
    return out;
}

/// Samples a supervised task from the enumerable prior: grid points with
/// replacement, labels flipped with probability eps. Point indices are
/// recorded so tests can query the exact posterior for the same task.
struct DiscreteTask {
    SyntheticTask task;
    std::vector<int> point_idx;  // grid index per row
};

inline DiscreteTask sample_discrete_task(Rng& rng, const DiscreteHypothesisPrior& prior,
                                         int n_min, int n_max, bool all_classes_in_context = false) {
    prior.validate();
    const int k = prior.n_classes;
    constexpr int kMaxRetries = 64;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        const int n = static_cast<int>(rng.uniform_int(n_min, n_max));
        int h = 0;
        double pick = rng.uniform(), acc = 0.0;
        for (int i = 0; i < prior.n_hypotheses(); ++i) {
            acc += prior.prior_probs[static_cast<size_t>(i)];
            if (pick < acc) {
                h = i;
                break;
            }
            h = i;
        }
        DiscreteTask out;
        out.point_idx.resize(static_cast<size_t>(n));
        out.task.x = Tensor::zeros({n, prior.grid.dim(1)});
        out.task.y.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            int g = static_cast<int>(rng.uniform_int(0, prior.n_points() - 1));
            out.point_idx[static_cast<size_t>(i)] = g;
            for (int64_t j = 0; j < prior.grid.dim(1); ++j)
                out.task.x.at(i, j) = prior.grid.at(g, j);
            int label = prior.hypotheses[static_cast<size_t>(h)][static_cast<size_t>(g)];
            if (prior.flip_eps > 0 && rng.bernoulli(prior.flip_eps)) {
                int shift = static_cast<int>(rng.uniform_int(1, k - 1));
                label = (label + shift) % k;
            }
            out.task.y[static_cast<size_t>(i)] = label;
        }
        out.task.n_classes = k;
        int lo = std::max(1, n / 4);
        int hi = std::max(lo, (3 * n) / 4);
        out.task.cut = static_cast<int>(rng.uniform_int(lo, hi));

        std::vector<bool> present(static_cast<size_t>(k), false);
        int distinct = 0;
        int span = all_classes_in_context ? out.task.cut : n;
        for (int i = 0; i < span; ++i) {
            if (!present[static_cast<size_t>(out.task.y[static_cast<size_t>(i)])]) {
                present[static_cast<size_t>(out.task.y[static_cast<size_t>(i)])] = true;
                ++distinct;
            }
        }
        if (distinct < (all_classes_in_context ? k : 2)) continue;
        return out;
    }
    throw std::runtime_error("sample_discrete_task: retry budget exceeded");
}

}  // namespace pfncast
