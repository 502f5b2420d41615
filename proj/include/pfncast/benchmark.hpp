#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfncast/dataset.hpp"
#include "pfncast/explain.hpp"
#include "pfncast/gbdt.hpp"
#include "pfncast/logistic.hpp"
#include "pfncast/metrics.hpp"
#include "pfncast/pfn.hpp"
#include "pfncast/preprocess.hpp"
#include "pfncast/threading.hpp"

// The repeated-seeding evaluation protocol: stratified splits, two target
// arms (as-is vs balanced), every model scored on identical partitions per
// seed, mean +- std over seeds, ROC curves for the designated seed.

namespace pfncast {

enum class TargetMode { Imbalance, Balanced };

inline const char* target_mode_name(TargetMode m) {
    return m == TargetMode::Imbalance ? "imbalance" : "balanced";
}

struct ModelError : std::runtime_error {
    std::string model;
    uint64_t seed;
    ModelError(const std::string& model_, uint64_t seed_, const std::string& what_)
        : std::runtime_error("model '" + model_ + "' failed at seed " + std::to_string(seed_) +
                             ": " + what_),
          model(model_),
          seed(seed_) {}
};

/// One benchmark contender: trains on the (mode-treated) split and returns
/// positive-class probabilities for the query rows.
struct BenchmarkModel {
    std::string name;
    std::string params_desc;
    std::function<std::vector<double>(const Tensor& x_train, const std::vector<int>& y_train,
                                      const Tensor& x_test, TargetMode mode, uint64_t seed)>
        run;
};

namespace detail_bench {

// Stratified seeded downsample to at most `cap` rows (class-proportional).
inline std::vector<int64_t> cap_context(const std::vector<int>& y, int64_t cap, uint64_t seed) {
    const int64_t n = static_cast<int64_t>(y.size());
    std::vector<int64_t> keep;
    if (cap <= 0 || n <= cap) {
        keep.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) keep[static_cast<size_t>(i)] = i;
        return keep;
    }
    std::map<int, std::vector<int64_t>> by_class;
    for (int64_t i = 0; i < n; ++i) by_class[y[static_cast<size_t>(i)]].push_back(i);
    Rng rng(mix_seed(seed, 0xca95ULL));
    for (auto& [cls, rows] : by_class) {
        rng.shuffle(rows);
        int64_t take = std::max<int64_t>(
            1, std::llround(static_cast<double>(cap) * static_cast<double>(rows.size()) /
                            static_cast<double>(n)));
        take = std::min<int64_t>(take, static_cast<int64_t>(rows.size()));
        for (int64_t i = 0; i < take; ++i) keep.push_back(rows[static_cast<size_t>(i)]);
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

inline Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& rows) {
    Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), x.dim(1)});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.row_ptr(rows[i]), x.dim(1), out.row_ptr(static_cast<int64_t>(i)));
    return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<int64_t>& rows) {
    std::vector<int> out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) out[i] = y[static_cast<size_t>(rows[i])];
    return out;
}

inline std::vector<double> positive_probs(const Ppd& ppd) {
    std::vector<double> out(static_cast<size_t>(ppd.probs.dim(0)), 0.0);
    for (size_t c = 0; c < ppd.class_ids.size(); ++c) {
        if (ppd.class_ids[c] != 1) continue;
        for (int64_t i = 0; i < ppd.probs.dim(0); ++i)
            out[static_cast<size_t>(i)] = ppd.probs.at(i, static_cast<int64_t>(c));
    }
    return out;
}

}  // namespace detail_bench

/// The five stock contenders: PFN with 1 and 32 preprocessing-ensemble
/// members (balanced arm oversamples), the in-house GBDT balanced either by
/// inverse-frequency class weights or by oversampling, and a logistic floor.
/// `pfn_context_cap` bounds the context fed to the PFN per split (0 = off).
inline std::vector<BenchmarkModel> standard_models(const PfnWeights& weights,
                                                   const GbdtParams& gbdt_params,
                                                   int64_t pfn_context_cap = 512,
                                                   int pfn_ensembles = 32) {
    std::vector<BenchmarkModel> models;

    auto pfn_runner = [&weights, pfn_context_cap](int members) {
        return [&weights, members, pfn_context_cap](const Tensor& x_train,
                                                    const std::vector<int>& y_train,
                                                    const Tensor& x_test, TargetMode mode,
                                                    uint64_t seed) {
            std::vector<int64_t> rows;
            if (mode == TargetMode::Balanced)
                rows = balance_training(y_train, mix_seed(seed, 0xbaaaULL));
            else {
                rows.resize(y_train.size());
                for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int64_t>(i);
            }
            Tensor xt = detail_bench::gather_rows(x_train, rows);
            std::vector<int> yt = detail_bench::gather_labels(y_train, rows);
            auto keep = detail_bench::cap_context(yt, pfn_context_cap, seed);
            xt = detail_bench::gather_rows(xt, keep);
            yt = detail_bench::gather_labels(yt, keep);
            Ppd ppd = ensemble_infer(weights, xt, yt, x_test, members);
            return detail_bench::positive_probs(ppd);
        };
    };
    models.push_back({"pfn", "1 ensemble", pfn_runner(1)});
    models.push_back({"pfn", std::to_string(pfn_ensembles) + " ensembles",
                      pfn_runner(pfn_ensembles)});

    models.push_back({"gbdt-weighted", "class weights",
                      [gbdt_params](const Tensor& x_train, const std::vector<int>& y_train,
                                    const Tensor& x_test, TargetMode mode, uint64_t) {
                          auto cw = mode == TargetMode::Balanced
                                        ? balanced_class_weights(y_train)
                                        : std::array<double, 2>{1.0, 1.0};
                          GbdtModel m = fit_gbdt(x_train, y_train, gbdt_params, cw);
                          return predict_proba(m, x_test);
                      }});

    models.push_back({"gbdt-resampled", "oversampling",
                      [gbdt_params](const Tensor& x_train, const std::vector<int>& y_train,
                                    const Tensor& x_test, TargetMode mode, uint64_t seed) {
                          Tensor xt = x_train;
                          std::vector<int> yt = y_train;
                          if (mode == TargetMode::Balanced) {
                              auto rows = balance_training(y_train, mix_seed(seed, 0xbaaaULL));
                              xt = detail_bench::gather_rows(x_train, rows);
                              yt = detail_bench::gather_labels(y_train, rows);
                          }
                          GbdtModel m = fit_gbdt(xt, yt, gbdt_params);
                          return predict_proba(m, x_test);
                      }});

    models.push_back({"logistic", "gd, l2",
                      [](const Tensor& x_train, const std::vector<int>& y_train,
                         const Tensor& x_test, TargetMode mode, uint64_t) {
                          ColumnStats stats = fit(x_train);
                          Tensor xt = transform(x_train, stats);
                          Tensor xe = transform(x_test, stats);
                          auto cw = mode == TargetMode::Balanced
                                        ? balanced_class_weights(y_train)
                                        : std::array<double, 2>{1.0, 1.0};
                          LogisticModel m = fit_logistic(xt, y_train, 0.5, 400, 1e-4, cw);
                          return predict_proba(m, xe);
                      }});
    return models;
}

struct ModelModeStats {
    std::string model, params, target_mode;
    double accuracy_mean = 0, accuracy_std = 0;
    double balanced_accuracy_mean = 0, balanced_accuracy_std = 0;
    double f1_mean = 0, f1_std = 0;
    int n_seeds = 0;
    double auc = 0;               // designated seed
    std::vector<RocPoint> roc;    // designated seed
};

struct MetricsReport {
    std::vector<ModelModeStats> rows;
};

struct BenchmarkOptions {
    int n_seeds = 40;
    double train_fraction = 0.76;
    uint64_t designated_seed = 0;  // ROC/AUC source
    double threshold = 0.5;
};

inline MetricsReport run_benchmark(const std::vector<BenchmarkModel>& models, const Tensor& x,
                                   const std::vector<int>& y, const BenchmarkOptions& opt = {}) {
    if (models.empty()) throw std::invalid_argument("run_benchmark: no models");
    if (opt.n_seeds < 1) throw std::invalid_argument("run_benchmark: n_seeds must be >= 1");
    if (opt.designated_seed >= static_cast<uint64_t>(opt.n_seeds))
        throw std::invalid_argument("run_benchmark: designated seed outside the seed range");

    struct CellResult {
        ClassificationMetrics m;
        double auc = 0;
        std::vector<RocPoint> roc;
    };
    const size_t n_cells = models.size() * 2;
    std::vector<std::vector<CellResult>> results(static_cast<size_t>(opt.n_seeds),
                                                 std::vector<CellResult>(n_cells));

    parallel_for(opt.n_seeds, [&](int64_t s) {
        SplitSpec spec;
        spec.train_fraction = opt.train_fraction;
        spec.seed = static_cast<uint64_t>(s);
        SplitIndices si = stratified_split(y, spec);
        Tensor x_train = detail_bench::gather_rows(x, si.train);
        Tensor x_test = detail_bench::gather_rows(x, si.test);
        std::vector<int> y_train = detail_bench::gather_labels(y, si.train);
        std::vector<int> y_test = detail_bench::gather_labels(y, si.test);

        for (size_t mi = 0; mi < models.size(); ++mi) {
            for (int mode_i = 0; mode_i < 2; ++mode_i) {
                TargetMode mode = mode_i == 0 ? TargetMode::Imbalance : TargetMode::Balanced;
                std::vector<double> proba;
                try {
                    proba = models[mi].run(x_train, y_train, x_test, mode,
                                           static_cast<uint64_t>(s));
                } catch (const std::exception& e) {
                    throw ModelError(models[mi].name + " (" + models[mi].params_desc + ", " +
                                         target_mode_name(mode) + ")",
                                     static_cast<uint64_t>(s), e.what());
                }
                if (proba.size() != y_test.size())
                    throw ModelError(models[mi].name, static_cast<uint64_t>(s),
                                     "prediction count mismatch");
                std::vector<int> pred(proba.size());
                for (size_t i = 0; i < proba.size(); ++i)
                    pred[i] = proba[i] >= opt.threshold ? 1 : 0;
                CellResult& cell = results[static_cast<size_t>(s)][mi * 2 + static_cast<size_t>(mode_i)];
                cell.m = metrics(y_test, pred);
                if (static_cast<uint64_t>(s) == opt.designated_seed) {
                    RocResult rr = roc_auc(y_test, proba);
                    cell.auc = rr.auc;
                    cell.roc = std::move(rr.points);
                }
            }
        }
    });

    MetricsReport report;
    for (size_t mi = 0; mi < models.size(); ++mi) {
        for (int mode_i = 0; mode_i < 2; ++mode_i) {
            ModelModeStats row;
            row.model = models[mi].name;
            row.params = models[mi].params_desc;
            row.target_mode = target_mode_name(mode_i == 0 ? TargetMode::Imbalance
                                                           : TargetMode::Balanced);
            row.n_seeds = opt.n_seeds;
            auto agg = [&](auto getter, double& mean_out, double& std_out) {
                double mean = 0;
                for (int s = 0; s < opt.n_seeds; ++s)
                    mean += getter(results[static_cast<size_t>(s)][mi * 2 + static_cast<size_t>(mode_i)]);
                mean /= opt.n_seeds;
                double var = 0;
                for (int s = 0; s < opt.n_seeds; ++s) {
                    double d = getter(results[static_cast<size_t>(s)][mi * 2 + static_cast<size_t>(mode_i)]) - mean;
                    var += d * d;
                }
                std_out = opt.n_seeds > 1 ? std::sqrt(var / (opt.n_seeds - 1)) : 0.0;
                mean_out = mean;
            };
            agg([](const CellResult& c) { return c.m.accuracy; }, row.accuracy_mean,
                row.accuracy_std);
            agg([](const CellResult& c) { return c.m.balanced_accuracy; },
                row.balanced_accuracy_mean, row.balanced_accuracy_std);
            agg([](const CellResult& c) { return c.m.f1; }, row.f1_mean, row.f1_std);
            const CellResult& designated =
                results[opt.designated_seed][mi * 2 + static_cast<size_t>(mode_i)];
            row.auc = designated.auc;
            row.roc = designated.roc;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization (fixed key order, 6 significant digits)
// ---------------------------------------------------------------------------

inline double round_sig(double v, int digits = 6) {
    if (v == 0.0 || !std::isfinite(v)) return v;
    double mag = std::pow(10.0, digits - 1 - static_cast<int>(std::floor(std::log10(std::fabs(v)))));
    return std::round(v * mag) / mag;
}

inline std::string report_to_json(const MetricsReport& report) {
    nlohmann::ordered_json root = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        nlohmann::ordered_json row;
        row["model"] = r.model;
        row["params"] = r.params;
        row["target_mode"] = r.target_mode;
        row["accuracy_mean"] = round_sig(r.accuracy_mean);
        row["accuracy_std"] = round_sig(r.accuracy_std);
        row["balanced_accuracy_mean"] = round_sig(r.balanced_accuracy_mean);
        row["balanced_accuracy_std"] = round_sig(r.balanced_accuracy_std);
        row["f1_mean"] = round_sig(r.f1_mean);
        row["f1_std"] = round_sig(r.f1_std);
        row["n_seeds"] = r.n_seeds;
        root.push_back(std::move(row));
    }
    return root.dump(2) + "\n";
}

inline std::string roc_points_csv(const std::vector<RocPoint>& points) {
    std::string out = "threshold,fpr,tpr\n";
    char buf[96];
    for (const auto& p : points) {
        if (std::isinf(p.threshold))
            out += "inf";
        else {
            int len = std::snprintf(buf, sizeof(buf), "%.6g", p.threshold);
            out.append(buf, static_cast<size_t>(len));
        }
        int len = std::snprintf(buf, sizeof(buf), ",%.6g,%.6g\n", p.fpr, p.tpr);
        out.append(buf, static_cast<size_t>(len));
    }
    return out;
}

/// One polyline per model over a unit-square ROC plot; AUC in the legend.
inline std::string roc_svg(const std::vector<ModelModeStats>& rows, const std::string& title) {
    const double w = 640, h = 520, px = 70, py = 40, pw = 500, ph = 400;
    auto sx = [&](double fpr) { return px + fpr * pw; };
    auto sy = [&](double tpr) { return py + (1.0 - tpr) * ph; };
    static const char* palette[] = {"#1b7837", "#d95f02", "#7570b3", "#e7298a",
                                    "#66a61e", "#e6ab02", "#a6761d", "#666666"};
    char buf[256];
    std::string svg;
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                  "viewBox=\"0 0 %g %g\">\n",
                  w, h, w, h);
    svg += buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">%s</text>\n",
                  px, title.c_str());
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" "
                  "stroke=\"black\"/>\n",
                  px, py, pw, ph);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#bbbbbb\" "
                  "stroke-dasharray=\"6,4\"/>\n",
                  sx(0), sy(0), sx(1), sy(1));
    svg += buf;
    for (int t = 0; t <= 4; ++t) {
        double v = t / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
                      "text-anchor=\"middle\">%.2f</text>\n",
                      sx(v), py + ph + 16, v);
        svg += buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
                      "text-anchor=\"end\">%.2f</text>\n",
                      px - 6, sy(v) + 4, v);
        svg += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"13\" "
                  "text-anchor=\"middle\">false positive rate</text>\n",
                  px + pw / 2, py + ph + 34);
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"16\" y=\"%g\" font-family=\"sans-serif\" font-size=\"13\" "
                  "transform=\"rotate(-90 16 %g)\" text-anchor=\"middle\">true positive "
                  "rate</text>\n",
                  py + ph / 2, py + ph / 2);
    svg += buf;

    int color = 0;
    double legend_y = py + 16;
    for (const auto& row : rows) {
        const char* c = palette[color % 8];
        std::string pts;
        char pb[64];
        for (const auto& p : row.roc) {
            std::snprintf(pb, sizeof(pb), "%.2f,%.2f ", sx(p.fpr), sy(p.tpr));
            pts += pb;
        }
        std::snprintf(buf, sizeof(buf),
                      "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.6\" points=\"%s\"/>\n",
                      c, pts.c_str());
        svg += buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" "
                      "fill=\"%s\">%s (%s) AUC=%.4f</text>\n",
                      px + pw - 270.0, legend_y, c, row.model.c_str(), row.params.c_str(),
                      row.auc);
        svg += buf;
        legend_y += 16;
        ++color;
    }
    svg += "</svg>\n";
    return svg;
}

inline std::string importance_json(const std::vector<std::string>& names,
                                   const std::vector<double>& scores,
                                   const std::vector<int>& ranked) {
    nlohmann::ordered_json root;
    for (size_t r = 0; r < ranked.size(); ++r) {
        int j = ranked[r];
        nlohmann::ordered_json entry;
        entry["score"] = round_sig(scores[static_cast<size_t>(j)]);
        entry["rank"] = r + 1;
        root[names[static_cast<size_t>(j)]] = std::move(entry);
    }
    return root.dump(2) + "\n";
}

}  // namespace pfncast
