#include <doctest.h>

#include <cmath>

#include "pfncast/metrics.hpp"
#include "pfncast/rng.hpp"
#include "support/oracles.hpp"

using namespace pfncast;

TEST_CASE("perfect scores give auc and f1 of one") {
    std::vector<int> y = {1, 0, 1, 0, 1};
    std::vector<double> s = {0.9, 0.1, 0.8, 0.2, 0.99};
    RocResult r = roc_auc(y, s);
    CHECK(r.auc == 1.0);
    std::vector<int> pred = {1, 0, 1, 0, 1};
    CHECK(metrics(y, pred).f1 == 1.0);
    CHECK(metrics(y, pred).accuracy == 1.0);
}

TEST_CASE("constant predictors sit at balanced accuracy one half") {
    std::vector<int> y = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    std::vector<int> all_zero(y.size(), 0);
    std::vector<int> all_one(y.size(), 1);
    CHECK(metrics(y, all_zero).balanced_accuracy == 0.5);
    CHECK(metrics(y, all_one).balanced_accuracy == 0.5);
}

TEST_CASE("textbook pair-counting example") {
    std::vector<int> y = {1, 1, 0, 0};
    std::vector<double> s = {0.9, 0.4, 0.6, 0.1};
    RocResult r = roc_auc(y, s);
    CHECK(r.auc == 0.75);  // 3 of 4 pairs correctly ordered
}

TEST_CASE("auc equals all-pairs mann-whitney counting exactly, ties included") {
    Rng rng(101);
    for (int trial = 0; trial < 120; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_int(0, 60));
        std::vector<int> y(static_cast<size_t>(n));
        std::vector<double> s(static_cast<size_t>(n));
        bool has0 = false, has1 = false;
        for (int i = 0; i < n; ++i) {
            y[static_cast<size_t>(i)] = rng.bernoulli(0.4) ? 1 : 0;
            // coarse quantization forces plenty of score ties
            s[static_cast<size_t>(i)] = std::round(rng.uniform() * 8.0) / 8.0;
            has0 = has0 || y[static_cast<size_t>(i)] == 0;
            has1 = has1 || y[static_cast<size_t>(i)] == 1;
        }
        if (!has0) y[0] = 0;
        if (!has1) y[1] = 1;

        int64_t n_pos = 0, n_neg = 0;
        for (int v : y) (v == 1 ? n_pos : n_neg)++;
        int64_t mw2 = oracles::mann_whitney_2u(y, s);
        double want = static_cast<double>(mw2) /
                      (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
        RocResult r = roc_auc(y, s);
        CHECK(r.auc == want);  // bit-exact: both are integer / (2*np*nn)
    }
}

TEST_CASE("roc curve geometry") {
    std::vector<int> y = {1, 1, 0, 0};
    std::vector<double> s = {0.9, 0.4, 0.6, 0.1};
    RocResult r = roc_auc(y, s);
    REQUIRE(r.points.size() == 5);  // origin + 4 distinct scores
    CHECK(r.points.front().fpr == 0.0);
    CHECK(r.points.front().tpr == 0.0);
    CHECK(r.points.back().fpr == 1.0);
    CHECK(r.points.back().tpr == 1.0);
    for (size_t i = 1; i < r.points.size(); ++i) {
        CHECK(r.points[i].fpr >= r.points[i - 1].fpr);
        CHECK(r.points[i].tpr >= r.points[i - 1].tpr);
        CHECK(r.points[i].threshold < r.points[i - 1].threshold);
    }
}

TEST_CASE("metrics are invariant under joint permutation") {
    Rng rng(7);
    std::vector<int> y(40), pred(40);
    for (size_t i = 0; i < y.size(); ++i) {
        y[i] = rng.bernoulli(0.5) ? 1 : 0;
        pred[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    auto base = metrics(y, pred);

    std::vector<size_t> perm(y.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<int> y2(y.size()), pred2(y.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        y2[i] = y[perm[i]];
        pred2[i] = pred[perm[i]];
    }
    auto shuffled = metrics(y2, pred2);
    CHECK(base.accuracy == shuffled.accuracy);
    CHECK(base.balanced_accuracy == shuffled.balanced_accuracy);
    CHECK(base.f1 == shuffled.f1);
}

TEST_CASE("roc_auc rejects degenerate inputs") {
    CHECK_THROWS_AS(roc_auc({1, 1}, {0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(roc_auc({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(roc_auc({1, 0}, {0.5}), std::invalid_argument);
}
