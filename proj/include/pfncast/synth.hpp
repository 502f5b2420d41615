#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pfncast/dataset.hpp"
#include "pfncast/rng.hpp"

// Synthetic block-season dataset shaped like the disease-forecasting
// problem: grouped correlated features (spectral, climate, soil, terrain,
// block attributes), two rows per block, nine imbalanced disease indicator
// columns, ~5% missing cells, and a planted nonlinear response driving the
// disease probability. The signal mixes a pure interaction with a
// non-monotone optimum, so linear models recover only part of it.

namespace pfncast {

struct SynthOptions {
    int64_t rows = 1335;
    int64_t features = 450;
    double missing_rate = 0.05;
};

namespace detail_synth {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct FeatureSpec {
    std::string name;
    int driver;      // which latent the feature loads on (-1 = pure noise)
    double loading;  // signal coefficient
    double noise;    // private noise scale
    bool block_constant;
    bool integerize;
};

}  // namespace detail_synth

inline TabularDataset generate_vineyard_like(uint64_t seed, const SynthOptions& opt = {}) {
    const int64_t n = opt.rows, f = opt.features;
    if (n < 1 || f < 1) throw std::invalid_argument("generate_vineyard_like: bad size");
    Rng rng(mix_seed(seed, 0x71e7a2dULL));

    TabularDataset ds;
    ds.disease_names = {"Aspergillus", "Bitter Rot",    "Botrytis",    "Downy Mildew",
                        "Penicillium", "Powdery Mildew", "Ripe Rot",   "Sooty Mould",
                        "Sour Rot"};

    // two seasons per block, like block-season sampling
    const int64_t n_blocks = std::max<int64_t>(1, (n + 1) / 2);
    std::vector<int> block_of(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) block_of[static_cast<size_t>(i)] = static_cast<int>(i % n_blocks);
    ds.block_ids.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "B%04d", block_of[static_cast<size_t>(i)] + 1);
        ds.block_ids[static_cast<size_t>(i)] = buf;
    }

    // block-level group latents: spectral, climate, soil, terrain, management
    enum { kSpec = 0, kClim, kSoil, kTerr, kMgmt, kGroups };
    std::vector<std::array<double, kGroups>> block_latent(static_cast<size_t>(n_blocks));
    for (auto& b : block_latent)
        for (double& v : b) v = rng.normal();

    // row-level drivers; soil and terrain stay essentially block-constant
    enum { dHum = 0, dTemp, dVigor, dPh, dTerrain, dMgmt, dSpecBase, dClimBase, nDrivers };
    std::vector<std::array<double, nDrivers>> driver(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const auto& b = block_latent[static_cast<size_t>(block_of[static_cast<size_t>(i)])];
        auto& d = driver[static_cast<size_t>(i)];
        d[dHum] = 0.55 * b[kClim] + 0.84 * rng.normal();
        d[dTemp] = 0.55 * b[kClim] + 0.84 * rng.normal();
        d[dVigor] = 0.60 * b[kSpec] + 0.80 * rng.normal();
        d[dPh] = 0.95 * b[kSoil] + 0.31 * rng.normal();
        d[dTerrain] = b[kTerr];
        d[dMgmt] = b[kMgmt];
        d[dSpecBase] = 0.70 * b[kSpec] + 0.71 * rng.normal();
        d[dClimBase] = 0.70 * b[kClim] + 0.71 * rng.normal();
    }

    // feature table: group sizes by fixed proportions
    const int64_t n_spec = std::max<int64_t>(1, (f * 40) / 100);
    const int64_t n_clim = std::max<int64_t>(1, (f * 33) / 100);
    const int64_t n_soil = std::max<int64_t>(1, (f * 13) / 100);
    const int64_t n_terr = std::max<int64_t>(1, (f * 7) / 100);
    const int64_t n_blockf = std::max<int64_t>(1, f - n_spec - n_clim - n_soil - n_terr);

    std::vector<detail_synth::FeatureSpec> specs;
    specs.reserve(static_cast<size_t>(f));
    auto add_group = [&](const std::string& prefix, int64_t count,
                         const std::vector<int>& drivers, bool block_constant, bool integer) {
        for (int64_t j = 0; j < count; ++j) {
            detail_synth::FeatureSpec fs;
            char buf[48];
            std::snprintf(buf, sizeof(buf), "%s_%03d", prefix.c_str(), static_cast<int>(j + 1));
            fs.name = buf;
            // roughly a quarter of each group carries no signal at all
            bool noise_only = rng.bernoulli(0.25);
            fs.driver = noise_only
                            ? -1
                            : drivers[static_cast<size_t>(rng.uniform_int(
                                  0, static_cast<int64_t>(drivers.size()) - 1))];
            double mag = rng.uniform(0.7, 1.1);
            fs.loading = rng.bernoulli(0.5) ? mag : -mag;
            fs.noise = rng.uniform(0.22, 0.5);
            fs.block_constant = block_constant;
            fs.integerize = integer;
            specs.push_back(std::move(fs));
        }
    };
    add_group("spectral_band", n_spec, {dVigor, dSpecBase}, false, false);
    add_group("climate_var", n_clim, {dHum, dTemp, dClimBase}, false, false);
    add_group("soil_attr", n_soil, {dPh}, true, false);
    add_group("terrain_attr", n_terr, {dTerrain}, true, false);
    add_group("block_attr", n_blockf, {dMgmt}, true, true);

    while (static_cast<int64_t>(specs.size()) > f) specs.pop_back();
    ds.feature_names.reserve(specs.size());
    for (const auto& s : specs) ds.feature_names.push_back(s.name);

    // per-feature block-level noise so block-constant features differ by block
    std::vector<std::vector<double>> block_noise(specs.size());
    for (size_t j = 0; j < specs.size(); ++j) {
        if (!specs[j].block_constant) continue;
        block_noise[j].resize(static_cast<size_t>(n_blocks));
        for (double& v : block_noise[j]) v = rng.normal();
    }

    ds.x = Tensor::zeros({n, static_cast<int64_t>(specs.size())});
    for (int64_t i = 0; i < n; ++i) {
        const auto& d = driver[static_cast<size_t>(i)];
        for (size_t j = 0; j < specs.size(); ++j) {
            const auto& fs = specs[j];
            double signal = fs.driver >= 0 ? d[static_cast<size_t>(fs.driver)] : 0.0;
            double noise = fs.block_constant
                               ? block_noise[j][static_cast<size_t>(block_of[static_cast<size_t>(i)])]
                               : rng.normal();
            double v = fs.loading * signal + fs.noise * noise;
            if (fs.integerize) v = std::floor(v * 4.0);
            ds.x.at(i, static_cast<int64_t>(j)) = v;
        }
    }

    // planted response: interaction + non-monotone bump + mild linear parts
    std::vector<double> risk(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const auto& d = driver[static_cast<size_t>(i)];
        risk[static_cast<size_t>(i)] = 1.30 * std::tanh(2.2 * d[dHum]) * std::tanh(2.2 * d[dTemp]) +
                                       1.20 * std::exp(-2.0 * (d[dVigor] - 0.35) * (d[dVigor] - 0.35)) +
                                       0.55 * d[dPh] + 0.30 * d[dTerrain];
    }
    std::vector<double> sorted_risk = risk;
    std::sort(sorted_risk.begin(), sorted_risk.end());
    const double tau = sorted_risk[static_cast<size_t>(0.68 * static_cast<double>(n - 1))];

    const std::array<double, 9> disease_weight = {0.05, 0.07, 0.28, 0.16, 0.04,
                                                  0.18, 0.08, 0.06, 0.08};
    ds.disease.assign(static_cast<size_t>(n) * 9, 0);
    for (int64_t i = 0; i < n; ++i) {
        double p = detail_synth::sigmoid(8.0 * (risk[static_cast<size_t>(i)] - tau));
        if (!rng.bernoulli(p)) continue;
        // primary disease, then correlated secondaries
        double pick = rng.uniform(), acc = 0.0;
        int primary = 8;
        for (int k = 0; k < 9; ++k) {
            acc += disease_weight[static_cast<size_t>(k)];
            if (pick < acc) {
                primary = k;
                break;
            }
        }
        ds.disease[static_cast<size_t>(i) * 9 + static_cast<size_t>(primary)] = 1;
        for (int k = 0; k < 9; ++k) {
            if (k == primary) continue;
            if (rng.bernoulli(0.5 * disease_weight[static_cast<size_t>(k)]))
                ds.disease[static_cast<size_t>(i) * 9 + static_cast<size_t>(k)] = 1;
        }
    }

    if (opt.missing_rate > 0)
        for (double& v : ds.x.data)
            if (rng.bernoulli(opt.missing_rate)) v = std::numeric_limits<double>::quiet_NaN();

    ds.labels = binarize_target(ds);
    return ds;
}

}  // namespace pfncast
