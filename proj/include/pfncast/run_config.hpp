#pragma once

#include <set>
#include <string>

#include "pfncast/gbdt.hpp"
#include "pfncast/pfn.hpp"
#include "pfncast/prior.hpp"
#include "pfncast/toml.hpp"

// One TOML document configures the whole pipeline. Every field is optional
// and falls back to the module default; unknown sections or keys are
// rejected with their location.

namespace pfncast {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalConfig {
    double train_fraction = 0.76;
    int n_seeds = 40;
    int top_k = 25;
    int pfn_ensembles = 32;
    int64_t pfn_context = 512;
};

struct MapConfig {
    int ensembles = 8;
    int top_k = 25;
};

struct LogisticConfig {
    double lr = 0.5;
    int epochs = 400;
    double l2 = 1e-4;
};

struct RunConfig {
    PriorConfig prior;
    PfnConfig pfn;
    GbdtParams gbdt;
    LogisticConfig logistic;
    EvalConfig eval;
    MapConfig map;
};

namespace detail_cfg {

inline int as_int(const toml::Value& v) { return static_cast<int>(v.as_int()); }

inline void int_range(const toml::Value& v, int& lo, int& hi) {
    auto arr = v.as_number_array();
    if (arr.size() != 2) throw toml::TomlError("expected [min, max]", v.line, v.col);
    lo = static_cast<int>(arr[0]);
    hi = static_cast<int>(arr[1]);
}

template <class Fn>
void bind_section(const toml::Document& doc, const std::string& name,
                  const std::set<std::string>& known, Fn&& apply) {
    auto sec = doc.find(name);
    if (sec == doc.end()) return;
    for (const auto& [key, value] : sec->second) {
        if (!known.count(key))
            throw toml::TomlError("unknown key '" + key + "' in [" + name + "]", value.line,
                                  value.col);
        apply(key, value);
    }
}

}  // namespace detail_cfg

inline RunConfig parse_run_config(const std::string& text) {
    toml::Document doc = toml::parse(text);
    RunConfig cfg;

    static const std::set<std::string> known_sections = {"prior", "pfn",  "preprocess",
                                                         "baselines", "eval", "map"};
    for (const auto& [name, section] : doc) {
        if (name.empty() && section.empty()) continue;
        if (!known_sections.count(name)) {
            int line = 0, col = 0;
            if (!section.empty()) {
                line = section.begin()->second.line;
                col = section.begin()->second.col;
            }
            throw toml::TomlError("unknown section [" + name + "]", line, col);
        }
    }

    detail_cfg::bind_section(
        doc, "prior",
        {"n_samples", "n_features", "n_classes_max", "depth", "width", "weight_scale",
         "gaussian_input_fraction", "noise_sigma", "imbalance"},
        [&](const std::string& key, const toml::Value& v) {
            if (key == "n_samples")
                detail_cfg::int_range(v, cfg.prior.n_samples_min, cfg.prior.n_samples_max);
            else if (key == "n_features")
                detail_cfg::int_range(v, cfg.prior.n_features_min, cfg.prior.n_features_max);
            else if (key == "n_classes_max")
                cfg.prior.n_classes_max = detail_cfg::as_int(v);
            else if (key == "depth")
                detail_cfg::int_range(v, cfg.prior.depth_min, cfg.prior.depth_max);
            else if (key == "width")
                detail_cfg::int_range(v, cfg.prior.width_min, cfg.prior.width_max);
            else if (key == "weight_scale")
                cfg.prior.weight_scale = v.as_double();
            else if (key == "gaussian_input_fraction")
                cfg.prior.gaussian_input_fraction = v.as_double();
            else if (key == "noise_sigma")
                cfg.prior.noise_sigma = v.as_double();
            else if (key == "imbalance") {
                std::string mode = v.as_string();
                if (mode == "quantile-uniform")
                    cfg.prior.imbalance = IntervalMode::QuantileUniform;
                else if (mode == "random-offset")
                    cfg.prior.imbalance = IntervalMode::RandomOffset;
                else
                    throw toml::TomlError("imbalance must be 'quantile-uniform' or "
                                          "'random-offset'",
                                          v.line, v.col);
            }
        });

    detail_cfg::bind_section(
        doc, "pfn",
        {"n_layers", "emb_dim", "n_heads", "ff_dim", "max_features", "max_classes", "dropout"},
        [&](const std::string& key, const toml::Value& v) {
            if (key == "n_layers") cfg.pfn.n_layers = detail_cfg::as_int(v);
            else if (key == "emb_dim") cfg.pfn.emb_dim = detail_cfg::as_int(v);
            else if (key == "n_heads") cfg.pfn.n_heads = detail_cfg::as_int(v);
            else if (key == "ff_dim") cfg.pfn.ff_dim = detail_cfg::as_int(v);
            else if (key == "max_features") cfg.pfn.max_features = detail_cfg::as_int(v);
            else if (key == "max_classes") cfg.pfn.max_classes = detail_cfg::as_int(v);
            else if (key == "dropout") cfg.pfn.dropout = v.as_double();
        });

    detail_cfg::bind_section(doc, "preprocess", {},
                             [&](const std::string&, const toml::Value&) {});

    detail_cfg::bind_section(
        doc, "baselines",
        {"gbdt_rounds", "gbdt_max_depth", "gbdt_learning_rate", "gbdt_lambda",
         "gbdt_min_child_weight", "logistic_lr", "logistic_epochs", "logistic_l2"},
        [&](const std::string& key, const toml::Value& v) {
            if (key == "gbdt_rounds") cfg.gbdt.n_rounds = detail_cfg::as_int(v);
            else if (key == "gbdt_max_depth") cfg.gbdt.max_depth = detail_cfg::as_int(v);
            else if (key == "gbdt_learning_rate") cfg.gbdt.learning_rate = v.as_double();
            else if (key == "gbdt_lambda") cfg.gbdt.lambda_l2 = v.as_double();
            else if (key == "gbdt_min_child_weight") cfg.gbdt.min_child_weight = v.as_double();
            else if (key == "logistic_lr") cfg.logistic.lr = v.as_double();
            else if (key == "logistic_epochs") cfg.logistic.epochs = detail_cfg::as_int(v);
            else if (key == "logistic_l2") cfg.logistic.l2 = v.as_double();
        });

    detail_cfg::bind_section(
        doc, "eval", {"train_fraction", "n_seeds", "top_k", "pfn_ensembles", "pfn_context"},
        [&](const std::string& key, const toml::Value& v) {
            if (key == "train_fraction") cfg.eval.train_fraction = v.as_double();
            else if (key == "n_seeds") cfg.eval.n_seeds = detail_cfg::as_int(v);
            else if (key == "top_k") cfg.eval.top_k = detail_cfg::as_int(v);
            else if (key == "pfn_ensembles") cfg.eval.pfn_ensembles = detail_cfg::as_int(v);
            else if (key == "pfn_context") cfg.eval.pfn_context = v.as_int();
        });

    detail_cfg::bind_section(doc, "map", {"ensembles", "top_k"},
                             [&](const std::string& key, const toml::Value& v) {
                                 if (key == "ensembles") cfg.map.ensembles = detail_cfg::as_int(v);
                                 else if (key == "top_k") cfg.map.top_k = detail_cfg::as_int(v);
                             });

    cfg.prior.validate();
    cfg.pfn.validate();
    return cfg;
}

/// The [prior] section serialized back out, defaults included.
inline std::string prior_to_toml(const PriorConfig& p) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "[prior]\n"
                  "n_samples = [%d, %d]\n"
                  "n_features = [%d, %d]\n"
                  "n_classes_max = %d\n"
                  "depth = [%d, %d]\n"
                  "width = [%d, %d]\n"
                  "weight_scale = %g\n"
                  "gaussian_input_fraction = %g\n"
                  "noise_sigma = %g\n"
                  "imbalance = \"%s\"\n",
                  p.n_samples_min, p.n_samples_max, p.n_features_min, p.n_features_max,
                  p.n_classes_max, p.depth_min, p.depth_max, p.width_min, p.width_max,
                  p.weight_scale, p.gaussian_input_fraction, p.noise_sigma,
                  p.imbalance == IntervalMode::QuantileUniform ? "quantile-uniform"
                                                               : "random-offset");
    return buf;
}

}  // namespace pfncast
