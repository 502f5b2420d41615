#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pfncast/benchmark.hpp"
#include "pfncast/dataset.hpp"
#include "pfncast/rng.hpp"
#include "pfncast/synth.hpp"

using namespace pfncast;

namespace {

std::vector<int> make_labels(int n, int n_pos) {
    std::vector<int> y(static_cast<size_t>(n), 0);
    for (int i = 0; i < n_pos; ++i) y[static_cast<size_t>(i)] = 1;
    return y;
}

}  // namespace

TEST_CASE("binarize_target counts any-disease rows") {
    TabularDataset ds;
    ds.feature_names = {"f0"};
    ds.x = Tensor::from_rows({{1.0}, {2.0}, {3.0}, {4.0}});
    ds.disease_names = {"A", "B", "C"};
    ds.disease = {0, 0, 0,   // none
                  0, 1, 0,   // B only
                  1, 0, 1,   // A and C
                  0, 0, 0};  // none
    auto y = binarize_target(ds);
    CHECK(y == std::vector<int>{0, 1, 1, 0});

    int positives = 0;
    for (int64_t i = 0; i < ds.n_rows(); ++i) {
        bool any = false;
        for (size_t d = 0; d < 3; ++d) any = any || ds.disease_at(i, d);
        positives += any ? 1 : 0;
    }
    CHECK(positives == std::count(y.begin(), y.end(), 1));
}

TEST_CASE("stratified split quota arithmetic") {
    auto y = make_labels(100, 30);
    SplitSpec spec;
    spec.train_fraction = 0.76;
    spec.seed = 3;
    SplitIndices si = stratified_split(y, spec);
    CHECK(si.train.size() == 76);
    CHECK(si.test.size() == 24);
    int train_pos = 0;
    for (int64_t i : si.train) train_pos += y[static_cast<size_t>(i)];
    bool ok = train_pos == 22 || train_pos == 23;
    CHECK(ok);
}

TEST_CASE("stratified split is deterministic, disjoint, exhaustive") {
    auto y = make_labels(57, 13);
    SplitSpec spec;
    spec.seed = 11;
    SplitIndices a = stratified_split(y, spec);
    SplitIndices b = stratified_split(y, spec);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);

    std::set<int64_t> all(a.train.begin(), a.train.end());
    for (int64_t t : a.test) {
        CHECK(all.count(t) == 0);
        all.insert(t);
    }
    CHECK(all.size() == y.size());
}

TEST_CASE("stratified split keeps both classes in both sides") {
    auto y = make_labels(50, 2);  // tiny positive class
    SplitSpec spec;
    for (uint64_t s = 0; s < 20; ++s) {
        spec.seed = s;
        SplitIndices si = stratified_split(y, spec);
        int train_pos = 0, test_pos = 0;
        for (int64_t i : si.train) train_pos += y[static_cast<size_t>(i)];
        for (int64_t i : si.test) test_pos += y[static_cast<size_t>(i)];
        CHECK(train_pos >= 1);
        CHECK(test_pos >= 1);
    }
}

TEST_CASE("stratified split rejects singleton classes") {
    auto y = make_labels(20, 1);
    CHECK_THROWS_AS(stratified_split(y, SplitSpec{}), std::invalid_argument);
}

TEST_CASE("split partitions differ across seeds") {
    auto y = make_labels(100, 30);
    std::set<std::vector<int64_t>> seen;
    for (uint64_t s = 0; s < 40; ++s) {
        SplitSpec spec;
        spec.seed = s;
        seen.insert(stratified_split(y, spec).train);
    }
    CHECK(seen.size() >= 39);
}

TEST_CASE("balance_training oversamples the minority to parity") {
    SUBCASE("already balanced stays unchanged") {
        auto y = make_labels(10, 5);
        auto rows = balance_training(y, 1);
        CHECK(rows.size() == 10);
    }

    SUBCASE("10 vs 2 becomes 10 vs 10 using minority rows") {
        auto y = make_labels(12, 2);
        auto rows = balance_training(y, 1);
        CHECK(rows.size() == 20);
        int pos = 0;
        for (int64_t r : rows) pos += y[static_cast<size_t>(r)];
        CHECK(pos == 10);
        for (size_t i = 12; i < rows.size(); ++i) {
            bool from_minority = rows[i] == 0 || rows[i] == 1;
            CHECK(from_minority);
        }
    }

    SUBCASE("deterministic per seed") {
        auto y = make_labels(30, 4);
        CHECK(balance_training(y, 9) == balance_training(y, 9));
    }
}

TEST_CASE("csv round trip preserves values, missing cells and block ids") {
    TabularDataset ds;
    ds.feature_names = {"alpha", "beta"};
    ds.x = Tensor::from_rows({{1.5, std::numeric_limits<double>::quiet_NaN()},
                              {-2.25, 0.0078125},
                              {3e-7, 42.0}});
    ds.disease_names = {"Botrytis", "Sour Rot"};
    ds.disease = {1, 0, 0, 0, 0, 1};
    ds.block_ids = {"B01", "B01", "B02"};
    ds.labels = binarize_target(ds);

    std::string text = write_csv(ds);
    std::istringstream in(text);
    TabularDataset back = read_csv(in);

    CHECK(back.feature_names == ds.feature_names);
    CHECK(back.disease_names == ds.disease_names);
    CHECK(back.block_ids == ds.block_ids);
    CHECK(back.labels == std::vector<int>{1, 0, 1});
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 2; ++j) {
            if (std::isnan(ds.x.at(i, j)))
                CHECK(std::isnan(back.x.at(i, j)));
            else
                CHECK(back.x.at(i, j) == ds.x.at(i, j));
        }
}

TEST_CASE("csv reader accepts a plain label column") {
    std::istringstream in("f0,f1,label\n0.5,1.5,1\n0.25,,0\n");
    TabularDataset ds = read_csv(in);
    CHECK(ds.feature_names == std::vector<std::string>{"f0", "f1"});
    CHECK(ds.labels == std::vector<int>{1, 0});
    CHECK(std::isnan(ds.x.at(1, 1)));
    CHECK(ds.disease_names.empty());
}

TEST_CASE("synthetic vineyard-like dataset meets its contract") {
    SynthOptions opt;
    opt.rows = 400;  // smaller for test speed, same generator
    opt.features = 120;
    TabularDataset a = generate_vineyard_like(7, opt);
    TabularDataset b = generate_vineyard_like(7, opt);

    SUBCASE("deterministic per seed") {
        CHECK(a.feature_names == b.feature_names);
        CHECK(a.labels == b.labels);
        CHECK(a.block_ids == b.block_ids);
        for (size_t i = 0; i < a.x.data.size(); ++i) {
            if (std::isnan(a.x.data[i]))
                CHECK(std::isnan(b.x.data[i]));
            else
                CHECK(a.x.data[i] == b.x.data[i]);
        }
    }

    SUBCASE("schema: nine diseases, blocks, grouped feature names") {
        CHECK(a.disease_names ==
              std::vector<std::string>{"Aspergillus", "Bitter Rot", "Botrytis", "Downy Mildew",
                                       "Penicillium", "Powdery Mildew", "Ripe Rot",
                                       "Sooty Mould", "Sour Rot"});
        CHECK(a.n_features() == 120);
        CHECK(a.n_rows() == 400);
        CHECK(!a.block_ids.empty());
        int groups = 0;
        for (const char* prefix :
             {"spectral_band", "climate_var", "soil_attr", "terrain_attr", "block_attr"}) {
            bool found = false;
            for (const auto& n : a.feature_names) found = found || n.rfind(prefix, 0) == 0;
            groups += found ? 1 : 0;
        }
        CHECK(groups == 5);
    }

    SUBCASE("positive rate stays inside the declared band across seeds") {
        for (uint64_t seed = 0; seed < 20; ++seed) {
            TabularDataset d = generate_vineyard_like(seed, opt);
            double rate = 0;
            for (int v : d.labels) rate += v;
            rate /= static_cast<double>(d.labels.size());
            CHECK(rate >= 0.25);
            CHECK(rate <= 0.40);
        }
    }

    SUBCASE("about five percent missing cells") {
        int64_t missing = 0;
        for (double v : a.x.data) missing += std::isnan(v) ? 1 : 0;
        double rate = static_cast<double>(missing) / static_cast<double>(a.x.data.size());
        CHECK(rate > 0.03);
        CHECK(rate < 0.07);
    }
}

TEST_CASE("gbdt learns the planted signal") {
    SynthOptions opt;
    opt.rows = 500;
    opt.features = 60;
    TabularDataset ds = generate_vineyard_like(3, opt);
    SplitSpec spec;
    spec.seed = 0;
    SplitIndices si = stratified_split(ds.labels, spec);
    TabularDataset train = subset(ds, si.train);
    TabularDataset test = subset(ds, si.test);

    GbdtParams p;
    p.n_rounds = 120;
    GbdtModel m = fit_gbdt(train.x, train.labels, p);
    auto proba = predict_proba(m, test.x);
    double auc = roc_auc(test.labels, proba).auc;
    CHECK(auc > 0.8);
}

TEST_CASE("run_benchmark aggregates per model and mode") {
    SynthOptions opt;
    opt.rows = 160;
    opt.features = 24;
    TabularDataset ds = generate_vineyard_like(5, opt);

    // two cheap models keep the protocol test fast
    std::vector<BenchmarkModel> models;
    models.push_back({"gbdt-weighted", "class weights",
                      [](const Tensor& xt, const std::vector<int>& yt, const Tensor& xe,
                         TargetMode mode, uint64_t) {
                          auto cw = mode == TargetMode::Balanced ? balanced_class_weights(yt)
                                                                 : std::array<double, 2>{1, 1};
                          GbdtParams p;
                          p.n_rounds = 20;
                          return predict_proba(fit_gbdt(xt, yt, p, cw), xe);
                      }});
    models.push_back({"logistic", "gd",
                      [](const Tensor& xt, const std::vector<int>& yt, const Tensor& xe,
                         TargetMode, uint64_t) {
                          ColumnStats st = fit(xt);
                          return predict_proba(fit_logistic(transform(xt, st), yt, 0.5, 60, 1e-4),
                                               transform(xe, st));
                      }});

    BenchmarkOptions bopt;
    bopt.n_seeds = 3;
    MetricsReport report = run_benchmark(models, ds.x, ds.labels, bopt);
    CHECK(report.rows.size() == 4);  // 2 models x 2 modes

    for (const auto& r : report.rows) {
        CHECK(r.n_seeds == 3);
        CHECK(r.accuracy_mean >= 0.0);
        CHECK(r.accuracy_mean <= 1.0);
        CHECK(r.accuracy_std >= 0.0);
        if (r.target_mode == "imbalance") {
            CHECK(!r.roc.empty());  // designated seed 0 carries the curve
            CHECK(r.auc > 0.0);
        }
    }

    SUBCASE("single seed reports zero std") {
        BenchmarkOptions one;
        one.n_seeds = 1;
        MetricsReport r1 = run_benchmark(models, ds.x, ds.labels, one);
        for (const auto& r : r1.rows) {
            CHECK(r.accuracy_std == 0.0);
            CHECK(r.f1_std == 0.0);
        }
    }

    SUBCASE("reruns are identical") {
        MetricsReport again = run_benchmark(models, ds.x, ds.labels, bopt);
        CHECK(report_to_json(again) == report_to_json(report));
    }
}

TEST_CASE("report json carries the table fields in fixed order") {
    // fixture row shaped like a published result table entry
    MetricsReport report;
    ModelModeStats row;
    row.model = "pfn";
    row.params = "default";
    row.target_mode = "imbalance";
    row.accuracy_mean = 0.7947;
    row.accuracy_std = 0.0243;
    row.balanced_accuracy_mean = 0.7489;
    row.balanced_accuracy_std = 0.0292;
    row.f1_mean = 0.6550;
    row.f1_std = 0.0416;
    row.n_seeds = 40;
    report.rows.push_back(row);

    std::string json = report_to_json(report);
    auto parsed = nlohmann::ordered_json::parse(json);
    REQUIRE(parsed.is_array());
    REQUIRE(parsed.size() == 1);
    const auto& r = parsed[0];
    CHECK(r["model"] == "pfn");
    CHECK(r["target_mode"] == "imbalance");
    CHECK(r["accuracy_mean"].get<double>() == doctest::Approx(0.7947));
    CHECK(r["balanced_accuracy_mean"].get<double>() == doctest::Approx(0.7489));
    CHECK(r["f1_mean"].get<double>() == doctest::Approx(0.6550));
    CHECK(r["n_seeds"] == 40);

    std::vector<std::string> keys;
    for (auto it = r.begin(); it != r.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"model", "params", "target_mode", "accuracy_mean",
                                           "accuracy_std", "balanced_accuracy_mean",
                                           "balanced_accuracy_std", "f1_mean", "f1_std",
                                           "n_seeds"});
}

TEST_CASE("roc csv and svg writers") {
    std::vector<RocPoint> pts = {{std::numeric_limits<double>::infinity(), 0, 0},
                                 {0.9, 0.0, 0.5},
                                 {0.4, 0.5, 1.0},
                                 {0.1, 1.0, 1.0}};
    std::string csv = roc_points_csv(pts);
    CHECK(csv.rfind("threshold,fpr,tpr\n", 0) == 0);
    CHECK(csv.find("inf,0,0") != std::string::npos);
    CHECK(csv.find("0.4,0.5,1") != std::string::npos);

    ModelModeStats row;
    row.model = "gbdt-weighted";
    row.params = "class weights";
    row.target_mode = "imbalance";
    row.auc = 0.8125;
    row.roc = pts;
    std::string svg = roc_svg({row}, "roc, imbalance arm");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find("AUC=0.8125") != std::string::npos);
}
