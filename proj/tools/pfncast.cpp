// pfncast: in-context tabular classification with a prior-fitted network,
// plus boosted-tree baselines, SHAP feature selection, a benchmarking
// protocol, and per-pixel probability heatmaps.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "pfncast/benchmark.hpp"
#include "pfncast/dataset.hpp"
#include "pfncast/explain.hpp"
#include "pfncast/file_io.hpp"
#include "pfncast/geomap.hpp"
#include "pfncast/gbdt.hpp"
#include "pfncast/pfn.hpp"
#include "pfncast/run_config.hpp"
#include "pfncast/synth.hpp"
#include "pfncast/weights_io.hpp"

namespace {

using namespace pfncast;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitModel = 4;

RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return parse_run_config(read_file(path));
}

PfnWeights load_weights(const std::string& path) {
    return deserialize_weights(read_file_bytes(path));
}

TabularDataset load_dataset(const std::string& path) {
    TabularDataset ds = read_csv_file(path);
    if (ds.labels.empty() && !ds.disease_names.empty()) ds.labels = binarize_target(ds);
    return ds;
}

// SHAP-ranked top-k selection, fitted on the seed-0 training split.
std::vector<int> shap_top_k(const TabularDataset& ds, const GbdtParams& gbdt_params, int k,
                            bool balanced_arm, double train_fraction,
                            std::vector<double>* scores_out) {
    SplitSpec spec;
    spec.train_fraction = train_fraction;
    spec.seed = 0;
    SplitIndices si = stratified_split(ds.labels, spec);
    TabularDataset train = subset(ds, si.train);
    auto cw = balanced_arm ? balanced_class_weights(train.labels)
                           : std::array<double, 2>{1.0, 1.0};
    GbdtParams p = gbdt_params;
    p.n_rounds = std::min(p.n_rounds, 100);  // ranking fit, not a contender
    GbdtModel model = fit_gbdt(train.x, train.labels, p, cw);
    std::vector<double> scores = mean_abs_shap(model, train.x);
    if (scores_out) *scores_out = scores;
    return select_top_k(scores, k);
}

int cmd_prior_train(const std::string& config_path, const std::string& out_path, int steps,
                    uint64_t seed, int batch, double lr) {
    RunConfig cfg = load_config(config_path);
    if (cfg.prior.n_classes_max > cfg.pfn.max_classes)
        throw ConfigError("prior n_classes_max (" + std::to_string(cfg.prior.n_classes_max) +
                          ") exceeds pfn max_classes (" + std::to_string(cfg.pfn.max_classes) +
                          ")");
    if (cfg.prior.n_features_max > cfg.pfn.max_features)
        throw ConfigError("prior n_features max (" + std::to_string(cfg.prior.n_features_max) +
                          ") exceeds pfn max_features (" +
                          std::to_string(cfg.pfn.max_features) + ")");
    TrainOptions opt;
    opt.steps = steps;
    opt.batch_size = batch;
    opt.lr = lr;
    opt.seed = seed;

    int next_log = 0;
    auto t0 = std::chrono::steady_clock::now();
    TrainResult result = train_offline(
        make_sampler(cfg.prior), cfg.pfn, opt, [&](int step, double loss, const PfnWeights&) {
            if (step < next_log && step + 1 != steps) return;
            next_log = step + 25;
            double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stderr, "step %5d/%d  loss %.5f  (%.1fs)\n", step + 1, steps, loss,
                         elapsed);
        });
    write_file_atomic(out_path, serialize_weights(result.weights));
    return kExitOk;
}

int cmd_synth_data(uint64_t seed, const std::string& out_path, int64_t rows, int64_t features) {
    SynthOptions opt;
    opt.rows = rows;
    opt.features = features;
    TabularDataset ds = generate_vineyard_like(seed, opt);
    write_file_atomic(out_path, write_csv(ds));
    std::fprintf(stderr, "wrote %lld rows x %lld features to %s\n",
                 static_cast<long long>(rows), static_cast<long long>(features),
                 out_path.c_str());
    return kExitOk;
}

int cmd_benchmark(const std::string& config_path, const std::string& data_path,
                  const std::string& weights_path, int n_seeds, const std::string& out_path,
                  const std::string& roc_dir, int top_k, const std::string& shap_target,
                  const std::string& importance_out, int64_t context_cap) {
    RunConfig cfg = load_config(config_path);
    TabularDataset ds = load_dataset(data_path);
    if (ds.labels.empty()) throw ConfigError("dataset has no label or disease columns");
    PfnWeights weights = load_weights(weights_path);

    if (top_k > 0 && top_k < ds.n_features()) {
        std::vector<double> scores;
        auto keep = shap_top_k(ds, cfg.gbdt, top_k, shap_target == "balanced",
                               cfg.eval.train_fraction, &scores);
        if (!importance_out.empty()) {
            auto ranked = select_top_k(scores, static_cast<int>(scores.size()));
            write_file_atomic(importance_out,
                              importance_json(ds.feature_names, scores, ranked));
        }
        ds = select_features(ds, keep);
        std::fprintf(stderr, "selected top %d features by shap\n", top_k);
    }

    auto models = standard_models(weights, cfg.gbdt, context_cap, cfg.eval.pfn_ensembles);
    BenchmarkOptions opt;
    opt.n_seeds = n_seeds;
    opt.train_fraction = cfg.eval.train_fraction;
    MetricsReport report = run_benchmark(models, ds.x, ds.labels, opt);
    write_file_atomic(out_path, report_to_json(report));
    std::fprintf(stderr, "wrote report with %zu rows to %s\n", report.rows.size(),
                 out_path.c_str());

    if (!roc_dir.empty()) {
        std::filesystem::create_directories(roc_dir);
        for (const char* mode : {"imbalance", "balanced"}) {
            std::vector<ModelModeStats> rows;
            for (const auto& r : report.rows)
                if (r.target_mode == mode) rows.push_back(r);
            for (const auto& r : rows) {
                std::string tag = r.model;
                for (auto& c : tag)
                    if (c == ' ' || c == '/') c = '_';
                std::string params_tag;
                for (char c : r.params)
                    params_tag += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
                write_file_atomic(roc_dir + "/roc_" + tag + "_" + params_tag + "_" + mode +
                                      ".csv",
                                  roc_points_csv(r.roc));
            }
            write_file_atomic(roc_dir + "/roc_" + mode + ".svg",
                              roc_svg(rows, std::string("roc curves, ") + mode + " targets"));
        }
    }
    return kExitOk;
}

int cmd_predict(const std::string& config_path, const std::string& data_path,
                const std::string& query_path, const std::string& weights_path,
                const std::string& out_path, int ensembles, int top_k, int64_t context_cap) {
    RunConfig cfg = load_config(config_path);
    TabularDataset train = load_dataset(data_path);
    if (train.labels.empty()) throw ConfigError("training dataset has no labels");
    TabularDataset query = load_dataset(query_path);
    PfnWeights weights = load_weights(weights_path);

    if (top_k > 0 && top_k < train.n_features()) {
        GbdtParams p = cfg.gbdt;
        p.n_rounds = std::min(p.n_rounds, 100);
        GbdtModel sel = fit_gbdt(train.x, train.labels, p);
        auto keep = select_top_k(mean_abs_shap(sel, train.x), top_k);
        train = select_features(train, keep);
        // map the selected columns into the query schema by name
        std::vector<int> query_cols;
        for (const auto& name : train.feature_names) {
            auto it = std::find(query.feature_names.begin(), query.feature_names.end(), name);
            if (it == query.feature_names.end())
                throw ConfigError("query csv is missing feature '" + name + "'");
            query_cols.push_back(static_cast<int>(it - query.feature_names.begin()));
        }
        query = select_features(query, query_cols);
    }
    if (train.n_features() != query.n_features())
        throw ConfigError("train and query feature counts disagree");

    Tensor ctx_x = train.x;
    std::vector<int> ctx_y = train.labels;
    if (context_cap > 0 && ctx_x.dim(0) > context_cap) {
        auto keep = detail_bench::cap_context(ctx_y, context_cap, 0);
        ctx_x = detail_bench::gather_rows(ctx_x, keep);
        ctx_y = detail_bench::gather_labels(ctx_y, keep);
    }

    Ppd ppd = ensemble_infer(weights, ctx_x, ctx_y, query.x, ensembles);
    auto probs = detail_bench::positive_probs(ppd);
    std::string out = "probability\n";
    char buf[48];
    for (double p : probs) {
        int len = std::snprintf(buf, sizeof(buf), "%.6g\n", p);
        out.append(buf, static_cast<size_t>(len));
    }
    write_file_atomic(out_path, out);
    return kExitOk;
}

int cmd_map(const std::string& config_path, const std::string& grid_path,
            const std::string& train_path, const std::string& weights_path,
            const std::string& out_path, const std::string& aggregate_path, int ensembles,
            int top_k, int64_t context_cap) {
    RunConfig cfg = load_config(config_path);
    PixelGrid grid = deserialize_grid(read_file_bytes(grid_path));
    TabularDataset train = load_dataset(train_path);
    if (train.labels.empty()) throw ConfigError("training dataset has no labels");
    PfnWeights weights = load_weights(weights_path);

    if (top_k > 0 && top_k < train.n_features()) {
        GbdtParams p = cfg.gbdt;
        p.n_rounds = std::min(p.n_rounds, 100);
        GbdtModel sel = fit_gbdt(train.x, train.labels, p);
        auto keep = select_top_k(mean_abs_shap(sel, train.x), top_k);
        train = select_features(train, keep);
    }

    // subset grid planes by the training feature names
    std::vector<uint32_t> plane_idx;
    for (const auto& name : train.feature_names) {
        auto it = std::find(grid.feature_names.begin(), grid.feature_names.end(), name);
        if (it == grid.feature_names.end())
            throw GridFormatError("grid is missing feature plane '" + name + "'");
        plane_idx.push_back(static_cast<uint32_t>(it - grid.feature_names.begin()));
    }
    PixelGrid sub = grid;
    sub.feature_names = train.feature_names;
    sub.planes.resize(grid.n_pixels() * plane_idx.size());
    for (size_t j = 0; j < plane_idx.size(); ++j)
        std::copy_n(grid.planes.begin() +
                        static_cast<std::ptrdiff_t>(plane_idx[j] * grid.n_pixels()),
                    grid.n_pixels(),
                    sub.planes.begin() + static_cast<std::ptrdiff_t>(j * grid.n_pixels()));

    Tensor ctx_x = train.x;
    std::vector<int> ctx_y = train.labels;
    if (context_cap > 0 && ctx_x.dim(0) > context_cap) {
        auto keep = detail_bench::cap_context(ctx_y, context_cap, 0);
        ctx_x = detail_bench::gather_rows(ctx_x, keep);
        ctx_y = detail_bench::gather_labels(ctx_y, keep);
    }

    ProbPredictor predictor;
    predictor.n_features = static_cast<int>(train.n_features());
    predictor.predict = [&](const Tensor& rows) {
        Ppd ppd = ensemble_infer(weights, ctx_x, ctx_y, rows, ensembles);
        return detail_bench::positive_probs(ppd);
    };

    ProbabilityRaster raster = predict_grid(predictor, sub);
    write_file_atomic(out_path, render_png(raster));
    std::fprintf(stderr, "wrote %ux%u heatmap to %s\n", raster.width, raster.height,
                 out_path.c_str());
    if (!aggregate_path.empty()) {
        if (!grid.has_blocks()) throw GridFormatError("grid has no block ids to aggregate");
        auto blocks = aggregate_blocks(raster, grid.block_ids);
        write_file_atomic(aggregate_path, block_aggregate_csv(blocks));
    }
    return kExitOk;
}

int cmd_synth_grid(const std::string& data_path, const std::string& out_path, uint32_t width,
                   uint32_t height, int blocks, uint64_t seed) {
    TabularDataset ds = load_dataset(data_path);
    PixelGrid grid = make_demo_grid(ds, width, height, blocks, seed);
    write_file_atomic(out_path, serialize_grid(grid));
    std::fprintf(stderr, "wrote %ux%u grid with %d blocks to %s\n", width, height, blocks,
                 out_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // transformer passes churn multi-MB tensors; keeping them on the heap
    // instead of mmap round-trips removes most allocator overhead
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
    CLI::App app{"prior-fitted-network tabular classification toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_path, query_path, weights_path, grid_path;
    std::string train_path, roc_dir, importance_out, aggregate_path;
    std::string shap_target = "imbalance";
    int steps = 2000, batch = 8, n_seeds = 40, top_k = 25, ensembles = 32;
    int map_ensembles = 8, blocks = 10;
    uint32_t width = 64, height = 48;
    int64_t context_cap = 512;
    uint64_t seed = 0;
    int64_t rows = 1335, features = 450;
    double lr = 1e-3;

    auto* train_cmd = app.add_subcommand("prior-train", "train the pfn offline on the prior");
    train_cmd->add_option("--config", config_path, "toml config");
    train_cmd->add_option("--out", out_path, "output weights file")->required();
    train_cmd->add_option("--steps", steps, "training steps");
    train_cmd->add_option("--seed", seed, "rng seed");
    train_cmd->add_option("--batch", batch, "tasks per step");
    train_cmd->add_option("--lr", lr, "adam learning rate");

    auto* synth_cmd = app.add_subcommand("synth-data", "generate the vineyard-like dataset");
    synth_cmd->add_option("--seed", seed, "rng seed");
    synth_cmd->add_option("--out", out_path, "output csv")->required();
    synth_cmd->add_option("--rows", rows, "rows");
    synth_cmd->add_option("--features", features, "feature columns");

    auto* bench_cmd = app.add_subcommand("benchmark", "run the model comparison protocol");
    bench_cmd->add_option("--config", config_path, "toml config");
    bench_cmd->add_option("--data", data_path, "dataset csv")->required();
    bench_cmd->add_option("--weights", weights_path, "pfn weights")->required();
    bench_cmd->add_option("--seeds", n_seeds, "split seeds");
    bench_cmd->add_option("--out", out_path, "report json")->required();
    bench_cmd->add_option("--roc-dir", roc_dir, "directory for roc csv/svg output");
    bench_cmd->add_option("--top-k", top_k, "shap-selected feature count (0 = all)");
    bench_cmd->add_option("--shap-target", shap_target, "shap ranking arm")
        ->check(CLI::IsMember({"imbalance", "balanced"}));
    bench_cmd->add_option("--importance-out", importance_out, "importance json path");
    bench_cmd->add_option("--pfn-context", context_cap, "pfn context row cap (0 = unlimited)");

    auto* predict_cmd = app.add_subcommand("predict", "pfn probabilities for query rows");
    predict_cmd->add_option("--config", config_path, "toml config");
    predict_cmd->add_option("--data", data_path, "training csv")->required();
    predict_cmd->add_option("--query", query_path, "query csv")->required();
    predict_cmd->add_option("--weights", weights_path, "pfn weights")->required();
    predict_cmd->add_option("--out", out_path, "probability csv")->required();
    predict_cmd->add_option("--ensembles", ensembles, "ensemble members");
    predict_cmd->add_option("--top-k", top_k, "shap-selected feature count (0 = all)");
    predict_cmd->add_option("--context", context_cap, "context row cap (0 = unlimited)")
        ->default_val(int64_t{0});

    auto* map_cmd = app.add_subcommand("map", "render a disease-probability heatmap");
    map_cmd->add_option("--config", config_path, "toml config");
    map_cmd->add_option("--grid", grid_path, "input pixel grid (.pxgr)")->required();
    map_cmd->add_option("--train", train_path, "training csv")->required();
    map_cmd->add_option("--weights", weights_path, "pfn weights")->required();
    map_cmd->add_option("--out", out_path, "output png")->required();
    map_cmd->add_option("--aggregate", aggregate_path, "block aggregate csv");
    map_cmd->add_option("--ensembles", map_ensembles, "ensemble members");
    map_cmd->add_option("--top-k", top_k, "shap-selected feature count (0 = all)");
    map_cmd->add_option("--context", context_cap, "context row cap (0 = unlimited)");

    auto* grid_cmd = app.add_subcommand("synth-grid", "build a demo pixel grid from a dataset");
    grid_cmd->add_option("--data", data_path, "dataset csv")->required();
    grid_cmd->add_option("--out", out_path, "output grid (.pxgr)")->required();
    grid_cmd->add_option("--width", width, "grid width");
    grid_cmd->add_option("--height", height, "grid height");
    grid_cmd->add_option("--blocks", blocks, "block count");
    grid_cmd->add_option("--seed", seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) {
            if (steps < 1) {
                std::fprintf(stderr, "error: --steps must be >= 1\n");
                return kExitUsage;
            }
            return cmd_prior_train(config_path, out_path, steps, seed, batch, lr);
        }
        if (synth_cmd->parsed()) return cmd_synth_data(seed, out_path, rows, features);
        if (bench_cmd->parsed())
            return cmd_benchmark(config_path, data_path, weights_path, n_seeds, out_path,
                                 roc_dir, top_k, shap_target, importance_out, context_cap);
        if (predict_cmd->parsed())
            return cmd_predict(config_path, data_path, query_path, weights_path, out_path,
                               ensembles, top_k, context_cap);
        if (map_cmd->parsed())
            return cmd_map(config_path, grid_path, train_path, weights_path, out_path,
                           aggregate_path, map_ensembles, top_k, context_cap);
        if (grid_cmd->parsed()) return cmd_synth_grid(data_path, out_path, width, height,
                                                      blocks, seed);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const ModelError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitModel;
    } catch (const toml::TomlError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const GridFormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const WeightsFormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitOk;
}
