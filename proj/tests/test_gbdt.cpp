#include <doctest.h>

#include <cmath>

#include "pfncast/gbdt.hpp"
#include "pfncast/logistic.hpp"
#include "pfncast/rng.hpp"
#include "support/gbdt_oracle.hpp"
#include "support/oracles.hpp"

using namespace pfncast;

namespace {

Tensor random_features(Rng& rng, int64_t n, int64_t f, double missing_rate = 0.0) {
    Tensor x = Tensor::zeros({n, f});
    for (double& v : x.data) {
        v = rng.normal();
        if (missing_rate > 0 && rng.bernoulli(missing_rate))
            v = std::numeric_limits<double>::quiet_NaN();
    }
    return x;
}

}  // namespace

TEST_CASE("separable one-feature data splits at the separating midpoint") {
    Tensor x = Tensor::from_rows({{-3.0}, {-1.0}, {2.0}, {4.0}});
    std::vector<int> y = {0, 0, 1, 1};
    GbdtParams p;
    p.n_rounds = 1;
    p.max_depth = 1;
    p.base_score = 0.0;
    p.min_child_weight = 0.25;  // four rows at h=1/4 each
    GbdtModel m = fit_gbdt(x, y, p);
    REQUIRE(m.trees.size() == 1);
    const Tree& t = m.trees[0];
    REQUIRE(t.nodes[0].feature == 0);
    CHECK(t.nodes[0].threshold == 0.5);  // midpoint of -1 and 2
    CHECK(t.nodes[static_cast<size_t>(t.nodes[0].left)].value < 0);   // toward class 0
    CHECK(t.nodes[static_cast<size_t>(t.nodes[0].right)].value > 0);  // toward class 1
}

TEST_CASE("depth-0 fit gives the closed-form root leaf") {
    Tensor x = Tensor::from_rows({{1.0}, {2.0}, {3.0}, {4.0}});
    std::vector<int> y = {1, 0, 0, 0};
    GbdtParams p;
    p.n_rounds = 1;
    p.max_depth = 0;
    p.lambda_l2 = 1.0;
    p.base_score = 0.0;
    GbdtModel m = fit_gbdt(x, y, p);
    REQUIRE(m.trees[0].nodes.size() == 1);
    // with margin 0: p=0.5, g_i = 0.5 - y_i, h_i = 0.25
    double g = 0.5 * 3 - 0.5, h = 0.25 * 4;
    CHECK(m.trees[0].nodes[0].value == -g / (h + 1.0));
}

TEST_CASE("class weight k equals k-fold row duplication") {
    Rng rng(404);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 12 + trial;
        Tensor x = random_features(rng, n, 3);
        std::vector<int> y(static_cast<size_t>(n));
        for (size_t i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(0.3) ? 1 : 0;
        if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
        if (std::count(y.begin(), y.end(), 0) == 0) y[1] = 0;

        const int k = 2 + trial % 2;  // 2 or 3 keeps weighted sums exact
        // duplicate each minority (label 1) row k times, duplicates adjacent
        std::vector<std::vector<double>> dup_rows;
        std::vector<int> dup_y;
        for (int i = 0; i < n; ++i) {
            int copies = y[static_cast<size_t>(i)] == 1 ? k : 1;
            for (int c = 0; c < copies; ++c) {
                dup_rows.emplace_back(x.row_ptr(i), x.row_ptr(i) + 3);
                dup_y.push_back(y[static_cast<size_t>(i)]);
            }
        }
        Tensor xd = Tensor::zeros({static_cast<int64_t>(dup_rows.size()), 3});
        for (size_t i = 0; i < dup_rows.size(); ++i)
            std::copy_n(dup_rows[i].data(), 3, xd.row_ptr(static_cast<int64_t>(i)));

        GbdtParams p;
        p.n_rounds = 1;
        p.max_depth = 2;
        p.base_score = 0.0;
        GbdtModel weighted = fit_gbdt(x, y, p, {1.0, static_cast<double>(k)});
        GbdtModel duplicated = fit_gbdt(xd, dup_y, p, {1.0, 1.0});

        REQUIRE(weighted.trees[0].nodes.size() == duplicated.trees[0].nodes.size());
        for (size_t i = 0; i < weighted.trees[0].nodes.size(); ++i) {
            const TreeNode& a = weighted.trees[0].nodes[i];
            const TreeNode& b = duplicated.trees[0].nodes[i];
            CHECK(a.feature == b.feature);
            CHECK(a.threshold == b.threshold);
            CHECK(a.value == b.value);
        }
    }
}

TEST_CASE("weighting equivalence holds across rounds within float tolerance") {
    Rng rng(405);
    const int n = 30;
    Tensor x = random_features(rng, n, 4);
    std::vector<int> y(static_cast<size_t>(n));
    for (size_t i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(0.25) ? 1 : 0;
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;

    std::vector<std::vector<double>> dup_rows;
    std::vector<int> dup_y;
    for (int i = 0; i < n; ++i) {
        int copies = y[static_cast<size_t>(i)] == 1 ? 2 : 1;
        for (int c = 0; c < copies; ++c) {
            dup_rows.emplace_back(x.row_ptr(i), x.row_ptr(i) + 4);
            dup_y.push_back(y[static_cast<size_t>(i)]);
        }
    }
    Tensor xd = Tensor::zeros({static_cast<int64_t>(dup_rows.size()), 4});
    for (size_t i = 0; i < dup_rows.size(); ++i)
        std::copy_n(dup_rows[i].data(), 4, xd.row_ptr(static_cast<int64_t>(i)));

    GbdtParams p;
    p.n_rounds = 20;
    p.max_depth = 3;
    GbdtModel weighted = fit_gbdt(x, y, p, {1.0, 2.0});
    GbdtModel duplicated = fit_gbdt(xd, dup_y, p);

    // weighted and duplicated accumulations run in different orders, so
    // allow last-ulp drift on the predictions of every round prefix
    Rng qr(7);
    Tensor queries = random_features(qr, 50, 4);
    auto mw = predict_margin(weighted, queries);
    auto md = predict_margin(duplicated, queries);
    for (size_t i = 0; i < mw.size(); ++i)
        CHECK(mw[i] == doctest::Approx(md[i]).epsilon(1e-10));
    for (size_t r = 0; r < weighted.trees.size(); ++r) {
        REQUIRE(weighted.trees[r].nodes.size() == duplicated.trees[r].nodes.size());
        for (size_t i = 0; i < weighted.trees[r].nodes.size(); ++i)
            CHECK(weighted.trees[r].nodes[i].feature == duplicated.trees[r].nodes[i].feature);
    }
}

TEST_CASE("first-round split matches the exhaustive oracle") {
    Rng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 8 + static_cast<int>(rng.uniform_int(0, 24));
        const int f = 1 + static_cast<int>(rng.uniform_int(0, 4));
        Tensor x = random_features(rng, n, f, trial % 3 == 0 ? 0.15 : 0.0);
        // quantized features create ties between rows
        if (trial % 2 == 0)
            for (double& v : x.data)
                if (!std::isnan(v)) v = std::round(v * 2.0) / 2.0;
        std::vector<int> y(static_cast<size_t>(n));
        for (size_t i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(0.4) ? 1 : 0;
        if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
        if (std::count(y.begin(), y.end(), 0) == 0) y[1] = 0;

        GbdtParams p;
        p.n_rounds = 1;
        p.max_depth = 1;
        p.base_score = 0.0;
        GbdtModel m = fit_gbdt(x, y, p);
        oracles::OracleSplit want =
            oracles::gbdt_best_split(x, y, {1.0, 1.0}, p.lambda_l2, p.min_child_weight);

        const Tree& t = m.trees[0];
        if (!want.found) {
            CHECK(t.nodes[0].feature == -1);
            continue;
        }
        REQUIRE(t.nodes[0].feature >= 0);
        CHECK(t.nodes[0].feature == want.feature);
        CHECK(t.nodes[0].threshold == want.threshold);
        CHECK(t.nodes[static_cast<size_t>(t.nodes[0].left)].value == want.left_value);
        CHECK(t.nodes[static_cast<size_t>(t.nodes[0].right)].value == want.right_value);
    }
}

TEST_CASE("training loss never increases across rounds") {
    Rng rng(31);
    Tensor x = random_features(rng, 60, 5);
    std::vector<int> y(60);
    for (size_t i = 0; i < y.size(); ++i)
        y[i] = (x.at(static_cast<int64_t>(i), 0) + 0.3 * rng.normal() > 0) ? 1 : 0;
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    if (std::count(y.begin(), y.end(), 0) == 0) y[1] = 0;

    GbdtParams p;
    p.n_rounds = 40;
    GbdtModel m = fit_gbdt(x, y, p);
    for (size_t r = 1; r < m.round_losses.size(); ++r)
        CHECK(m.round_losses[r] <= m.round_losses[r - 1] + 1e-12);
}

TEST_CASE("monotone feature transforms keep the tree structure") {
    Rng rng(77);
    Tensor x = random_features(rng, 40, 3);
    std::vector<int> y(40);
    for (size_t i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(0.5) ? 1 : 0;
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    if (std::count(y.begin(), y.end(), 0) == 0) y[1] = 0;

    GbdtParams p;
    p.n_rounds = 10;
    p.max_depth = 3;
    GbdtModel base = fit_gbdt(x, y, p);

    Tensor xt = x;
    for (double& v : xt.data) v = std::exp(v) + v;  // strictly increasing
    GbdtModel transformed = fit_gbdt(xt, y, p);

    auto pb = predict_proba(base, x);
    auto pt = predict_proba(transformed, xt);
    for (size_t i = 0; i < pb.size(); ++i) CHECK(pb[i] == doctest::Approx(pt[i]).epsilon(1e-12));
    for (size_t r = 0; r < base.trees.size(); ++r)
        for (size_t i = 0; i < base.trees[r].nodes.size(); ++i) {
            CHECK(base.trees[r].nodes[i].feature == transformed.trees[r].nodes[i].feature);
            CHECK(base.trees[r].nodes[i].value ==
                  doctest::Approx(transformed.trees[r].nodes[i].value).epsilon(1e-12));
        }
}

TEST_CASE("fit is deterministic") {
    Rng rng(88);
    Tensor x = random_features(rng, 50, 4, 0.1);
    std::vector<int> y(50);
    for (size_t i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(0.35) ? 1 : 0;
    if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
    if (std::count(y.begin(), y.end(), 0) == 0) y[1] = 0;

    GbdtParams p;
    p.n_rounds = 15;
    GbdtModel a = fit_gbdt(x, y, p);
    GbdtModel b = fit_gbdt(x, y, p);
    CHECK(a.base_score == b.base_score);
    REQUIRE(a.trees.size() == b.trees.size());
    for (size_t r = 0; r < a.trees.size(); ++r) {
        REQUIRE(a.trees[r].nodes.size() == b.trees[r].nodes.size());
        for (size_t i = 0; i < a.trees[r].nodes.size(); ++i) {
            CHECK(a.trees[r].nodes[i].threshold == b.trees[r].nodes[i].threshold);
            CHECK(a.trees[r].nodes[i].value == b.trees[r].nodes[i].value);
        }
    }
}

TEST_CASE("gbdt rejects bad inputs") {
    Tensor x = Tensor::from_rows({{1.0}, {2.0}});
    CHECK_THROWS_AS(fit_gbdt(x, {1, 1}, {}), std::invalid_argument);
    CHECK_THROWS_AS(fit_gbdt(x, {0, 2}, {}), std::invalid_argument);
    GbdtParams p;
    GbdtModel unfit;
    CHECK_THROWS_AS(predict_margin(unfit, x), std::invalid_argument);
}

TEST_CASE("predictions follow hand-built tree semantics") {
    GbdtModel m;
    m.n_features = 2;
    m.base_score = 0.25;
    m.params.learning_rate = 0.5;
    Tree t;
    t.nodes.resize(3);
    t.nodes[0].feature = 1;
    t.nodes[0].threshold = 0.0;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[0].default_left = false;
    t.nodes[1].value = -1.0;
    t.nodes[2].value = 2.0;
    m.trees.push_back(t);

    Tensor rows = Tensor::from_rows({{9.0, -1.0}, {9.0, 1.0}});
    auto margins = predict_margin(m, rows);
    CHECK(margins[0] == doctest::Approx(0.25 + 0.5 * -1.0));
    CHECK(margins[1] == doctest::Approx(0.25 + 0.5 * 2.0));

    // empty forest predicts sigmoid(base) everywhere
    GbdtModel empty;
    empty.n_features = 2;
    empty.base_score = 0.0;
    auto proba = predict_proba(empty, rows);
    CHECK(proba[0] == 0.5);
    CHECK(proba[1] == 0.5);

    // missing value routes along the default direction
    Tensor miss = Tensor::from_rows({{9.0, std::numeric_limits<double>::quiet_NaN()}});
    auto pm = predict_margin(m, miss);
    CHECK(pm[0] == doctest::Approx(0.25 + 0.5 * 2.0));
}

TEST_CASE("logistic regression basics") {
    SUBCASE("zero epochs means chance output") {
        Tensor x = Tensor::from_rows({{1.0}, {-1.0}});
        LogisticModel m = fit_logistic(x, {1, 0}, 0.5, 0, 1e-4);
        auto p = predict_proba(m, x);
        CHECK(p[0] == 0.5);
        CHECK(p[1] == 0.5);
    }

    SUBCASE("separable data gets the right weight sign") {
        Tensor x = Tensor::from_rows({{2.0}, {1.0}, {-1.0}, {-2.0}});
        LogisticModel m = fit_logistic(x, {1, 1, 0, 0}, 0.5, 200, 1e-3);
        CHECK(m.weights[0] > 0);
    }

    SUBCASE("gradient descent converges to the IRLS solution") {
        Rng rng(55);
        const int n = 40;
        std::vector<std::vector<double>> rows(static_cast<size_t>(n),
                                              std::vector<double>(2));
        std::vector<int> y(static_cast<size_t>(n));
        std::vector<double> w(static_cast<size_t>(n), 1.0);
        Tensor x = Tensor::zeros({n, 2});
        for (int i = 0; i < n; ++i) {
            rows[static_cast<size_t>(i)][0] = rng.normal();
            rows[static_cast<size_t>(i)][1] = rng.normal();
            x.at(i, 0) = rows[static_cast<size_t>(i)][0];
            x.at(i, 1) = rows[static_cast<size_t>(i)][1];
            double z = 0.8 * rows[static_cast<size_t>(i)][0] -
                       0.5 * rows[static_cast<size_t>(i)][1] + 0.3 * rng.normal();
            y[static_cast<size_t>(i)] = z > 0 ? 1 : 0;
        }
        const double l2 = 0.5;
        auto beta = oracles::irls_logistic(rows, y, w, l2);
        // descent normalizes the gradient by total weight; match its l2 scale
        LogisticModel m = fit_logistic(x, y, 1.0, 20000, l2 / static_cast<double>(n));
        CHECK(std::fabs(m.weights[0] - beta[0]) < 1e-3);
        CHECK(std::fabs(m.weights[1] - beta[1]) < 1e-3);
        CHECK(std::fabs(m.bias - beta[2]) < 1e-3);
    }
}
