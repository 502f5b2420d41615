#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/adam.hpp"
#include "pfncast/autodiff.hpp"
#include "pfncast/kernels.hpp"
#include "pfncast/preprocess.hpp"
#include "pfncast/prior.hpp"
#include "pfncast/rng.hpp"
#include "pfncast/threading.hpp"

// The prior-fitted network. Offline: train a transformer on synthetic tasks
// so that cross-entropy at query positions drives its output toward the
// posterior predictive of the sampling prior. Online: one forward pass over
// <context, queries> produces class probabilities; no parameter updates.
//
// Tokens carry no positional signal, so the context is a set: permuting
// context rows cannot change the output. Query tokens attend to the context
// and themselves only, which makes every query row independent of the others.

namespace pfncast {

struct PfnConfig {
    int n_layers = 3;
    int emb_dim = 128;
    int n_heads = 4;
    int ff_dim = 256;
    int max_features = 100;
    int max_classes = 10;
    double dropout = 0.0;  // applied during training only

    int head_dim() const { return emb_dim / n_heads; }

    void validate() const {
        if (n_layers < 1) throw std::invalid_argument("pfn: n_layers must be >= 1");
        if (n_heads < 1 || emb_dim % n_heads != 0)
            throw std::invalid_argument("pfn: emb_dim must be divisible by n_heads");
        if (ff_dim < 1) throw std::invalid_argument("pfn: ff_dim must be >= 1");
        if (max_features < 1) throw std::invalid_argument("pfn: max_features must be >= 1");
        if (max_classes < 2) throw std::invalid_argument("pfn: max_classes must be >= 2");
        if (dropout < 0 || dropout >= 1) throw std::invalid_argument("pfn: dropout out of range");
    }
};

struct PfnWeights {
    PfnConfig config;
    Tensor feature_proj;  // max_features x emb
    Tensor label_embed;   // (max_classes + 1) x emb; last row is the query state
    struct Layer {
        Tensor wq, wk, wv, wo;
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    };
    std::vector<Layer> layers;
    Tensor final_ln_g, final_ln_b;
    Tensor head_w;  // emb x max_classes
    Tensor head_b;  // max_classes

    template <class Self, class Fn>
    static void visit(Self& self, Fn&& fn) {
        fn("feature_proj", self.feature_proj);
        fn("label_embed", self.label_embed);
        for (size_t l = 0; l < self.layers.size(); ++l) {
            auto& ly = self.layers[l];
            const std::string p = "layer" + std::to_string(l) + ".";
            fn(p + "wq", ly.wq);
            fn(p + "wk", ly.wk);
            fn(p + "wv", ly.wv);
            fn(p + "wo", ly.wo);
            fn(p + "ln1_g", ly.ln1_g);
            fn(p + "ln1_b", ly.ln1_b);
            fn(p + "ln2_g", ly.ln2_g);
            fn(p + "ln2_b", ly.ln2_b);
            fn(p + "ff_w1", ly.ff_w1);
            fn(p + "ff_b1", ly.ff_b1);
            fn(p + "ff_w2", ly.ff_w2);
            fn(p + "ff_b2", ly.ff_b2);
        }
        fn("final_ln_g", self.final_ln_g);
        fn("final_ln_b", self.final_ln_b);
        fn("head_w", self.head_w);
        fn("head_b", self.head_b);
    }

    template <class Fn>
    void for_each_tensor(Fn&& fn) {
        visit(*this, std::forward<Fn>(fn));
    }
    template <class Fn>
    void for_each_tensor(Fn&& fn) const {
        visit(*this, std::forward<Fn>(fn));
    }

    bool all_finite() const {
        bool ok = true;
        for_each_tensor([&](const std::string&, const Tensor& t) { ok = ok && t.all_finite(); });
        return ok;
    }

    static PfnWeights init(const PfnConfig& cfg, uint64_t seed) {
        cfg.validate();
        Rng rng(mix_seed(seed, 0x5f4e57ULL));
        auto randn = [&](std::vector<int64_t> shape, double sd) {
            Tensor t = Tensor::zeros(std::move(shape));
            for (double& v : t.data) v = rng.normal(0.0, sd);
            return t;
        };
        const int64_t e = cfg.emb_dim;
        PfnWeights w;
        w.config = cfg;
        w.feature_proj = randn({cfg.max_features, e}, 0.05);
        w.label_embed = randn({cfg.max_classes + 1, e}, 0.5);
        const double attn_sd = 1.0 / std::sqrt(static_cast<double>(e));
        for (int l = 0; l < cfg.n_layers; ++l) {
            Layer ly;
            ly.wq = randn({e, e}, attn_sd);
            ly.wk = randn({e, e}, attn_sd);
            ly.wv = randn({e, e}, attn_sd);
            ly.wo = randn({e, e}, attn_sd);
            ly.ln1_g = Tensor::full({e}, 1.0);
            ly.ln1_b = Tensor::zeros({e});
            ly.ln2_g = Tensor::full({e}, 1.0);
            ly.ln2_b = Tensor::zeros({e});
            ly.ff_w1 = randn({e, cfg.ff_dim}, std::sqrt(2.0 / static_cast<double>(e)));
            ly.ff_b1 = Tensor::zeros({cfg.ff_dim});
            ly.ff_w2 = randn({cfg.ff_dim, e}, 1.0 / std::sqrt(static_cast<double>(cfg.ff_dim)));
            ly.ff_b2 = Tensor::zeros({e});
            w.layers.push_back(std::move(ly));
        }
        w.final_ln_g = Tensor::full({e}, 1.0);
        w.final_ln_b = Tensor::zeros({e});
        w.head_w = randn({e, cfg.max_classes}, attn_sd);
        w.head_b = Tensor::zeros({cfg.max_classes});
        return w;
    }
};

/// Posterior-predictive class probabilities for a batch of query rows.
struct Ppd {
    Tensor probs;                // n_test x K, rows sum to 1
    std::vector<int> class_ids;  // original label value per column
};

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

struct EncodedTask {
    Tensor tokens;  // (n_train + n_test) x emb
    BoolMatrix mask;
    int n_train = 0, n_test = 0;
};

namespace detail_pfn {

inline void check_capacity(const PfnConfig& cfg, int64_t n_features, int max_label) {
    if (n_features > cfg.max_features)
        throw std::invalid_argument("pfn: " + std::to_string(n_features) +
                                    " features exceed capacity " +
                                    std::to_string(cfg.max_features));
    if (max_label >= cfg.max_classes)
        throw std::invalid_argument("pfn: label " + std::to_string(max_label) +
                                    " exceeds class capacity " + std::to_string(cfg.max_classes));
}

// Zero-pad features to max_features and rescale values by
// max_features/actual so sparse tasks keep comparable activation mass.
inline Tensor pad_features(const Tensor& x, int actual_features, const PfnConfig& cfg) {
    const int64_t n = x.dim(0), f = x.dim(1);
    const double s = static_cast<double>(cfg.max_features) / static_cast<double>(actual_features);
    Tensor out = Tensor::zeros({n, cfg.max_features});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j) out.at(i, j) = x.at(i, j) * s;
    return out;
}

inline BoolMatrix build_mask(int n_train, int n_test) {
    const int n = n_train + n_test;
    BoolMatrix m(n, n, false);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n_train; ++j) m.at(i, j) = 1;
        if (i >= n_train) m.at(i, i) = 1;  // queries also see themselves
    }
    return m;
}

inline std::vector<int> token_label_indices(const std::vector<int>& y_train, int n_test,
                                            const PfnConfig& cfg) {
    std::vector<int> idx;
    idx.reserve(y_train.size() + static_cast<size_t>(n_test));
    for (int y : y_train) {
        if (y < 0) throw std::invalid_argument("pfn: negative label");
        idx.push_back(y);
    }
    for (int i = 0; i < n_test; ++i) idx.push_back(cfg.max_classes);  // query state
    return idx;
}

}  // namespace detail_pfn

/// Token/mask construction: one token per row, context tokens embed their
/// label, query tokens embed the reserved query state. Context tokens attend
/// to all context tokens; query tokens attend to the context and themselves.
inline EncodedTask encode(const PfnWeights& w, const Tensor& x_train,
                          const std::vector<int>& y_train, const Tensor& x_test,
                          int actual_features = -1) {
    const PfnConfig& cfg = w.config;
    cfg.validate();
    if (x_train.rank() != 2 || x_test.rank() != 2 || x_train.dim(1) != x_test.dim(1))
        throw std::invalid_argument("pfn::encode: feature counts disagree");
    if (static_cast<int64_t>(y_train.size()) != x_train.dim(0))
        throw std::invalid_argument("pfn::encode: label count mismatch");
    int max_label = -1;
    for (int y : y_train) max_label = std::max(max_label, y);
    if (actual_features < 0) actual_features = static_cast<int>(x_train.dim(1));
    detail_pfn::check_capacity(cfg, x_train.dim(1), max_label);

    const int n_train = static_cast<int>(x_train.dim(0));
    const int n_test = static_cast<int>(x_test.dim(0));

    Tensor x_all = Tensor::zeros({n_train + n_test, x_train.dim(1)});
    for (int64_t i = 0; i < n_train; ++i)
        std::copy_n(x_train.row_ptr(i), x_train.dim(1), x_all.row_ptr(i));
    for (int64_t i = 0; i < n_test; ++i)
        std::copy_n(x_test.row_ptr(i), x_test.dim(1), x_all.row_ptr(n_train + i));

    Tensor padded = detail_pfn::pad_features(x_all, actual_features, cfg);
    Tensor proj = nn::matmul(padded, w.feature_proj);
    Tensor emb = nn::table_rows(w.label_embed,
                                detail_pfn::token_label_indices(y_train, n_test, cfg));

    EncodedTask enc;
    enc.tokens = nn::add(proj, emb);
    enc.mask = detail_pfn::build_mask(n_train, n_test);
    enc.n_train = n_train;
    enc.n_test = n_test;
    return enc;
}

// ---------------------------------------------------------------------------
// Forward pass, shared between training (graph) and inference (eager)
// ---------------------------------------------------------------------------

namespace detail_pfn {

struct EagerBackend {
    using Ref = Tensor;
    Ref input(Tensor t) { return t; }
    Ref matmul(const Ref& a, const Ref& b) { return nn::matmul(a, b); }
    Ref transpose(const Ref& a) { return nn::transpose(a); }
    Ref add(const Ref& a, const Ref& b) { return nn::add(a, b); }
    Ref add_rowvec(const Ref& a, const Ref& v) { return nn::add_rowvec(a, v); }
    Ref scale(const Ref& a, double s) { return nn::scale(a, s); }
    Ref masked_softmax(const Ref& a, const std::shared_ptr<const BoolMatrix>& m) {
        return nn::masked_softmax(a, *m);
    }
    Ref layer_norm(const Ref& x, const Ref& g, const Ref& b) { return nn::layer_norm(x, g, b); }
    Ref gelu(const Ref& a) { return nn::gelu(a); }
    Ref table_rows(const Ref& t, const std::shared_ptr<const std::vector<int>>& idx) {
        return nn::table_rows(t, *idx);
    }
    Ref col_slice(const Ref& a, int64_t s, int64_t l) { return nn::col_slice(a, s, l); }
    Ref concat_cols(const std::vector<Ref>& parts) { return nn::concat_cols(parts); }
    Ref dropout(const Ref& a) { return a; }  // inference never drops
};

struct GraphBackend {
    ad::Graph* g = nullptr;
    double drop_p = 0.0;
    Rng* drop_rng = nullptr;

    using Ref = int;
    Ref input(Tensor t) { return g->input(std::move(t)); }
    Ref matmul(Ref a, Ref b) { return g->matmul(a, b); }
    Ref transpose(Ref a) { return g->transpose(a); }
    Ref add(Ref a, Ref b) { return g->add(a, b); }
    Ref add_rowvec(Ref a, Ref v) { return g->add_rowvec(a, v); }
    Ref scale(Ref a, double s) { return g->scale(a, s); }
    Ref masked_softmax(Ref a, std::shared_ptr<const BoolMatrix> m) {
        return g->masked_softmax(a, std::move(m));
    }
    Ref layer_norm(Ref x, Ref gain, Ref b) { return g->layer_norm(x, gain, b); }
    Ref gelu(Ref a) { return g->gelu(a); }
    Ref table_rows(Ref t, std::shared_ptr<const std::vector<int>> idx) {
        return g->table_rows(t, std::move(idx));
    }
    Ref col_slice(Ref a, int64_t s, int64_t l) { return g->col_slice(a, s, l); }
    Ref concat_cols(const std::vector<Ref>& parts) { return g->concat_cols(parts); }
    Ref dropout(Ref a) {
        if (drop_p <= 0.0 || !drop_rng) return a;
        const Tensor& v = g->value(a);
        Tensor mask = Tensor::zeros(v.shape);
        const double keep = 1.0 - drop_p;
        for (double& m : mask.data) m = drop_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        return g->mul(a, g->input(std::move(mask)));
    }
};

template <class B>
struct PfnRefs {
    using Ref = typename B::Ref;
    Ref feature_proj{}, label_embed{};
    struct Layer {
        Ref wq{}, wk{}, wv{}, wo{};
        Ref ln1_g{}, ln1_b{}, ln2_g{}, ln2_b{};
        Ref ff_w1{}, ff_b1{}, ff_w2{}, ff_b2{};
    };
    std::vector<Layer> layers;
    Ref final_ln_g{}, final_ln_b{}, head_w{}, head_b{};
};

// Eager refs are plain tensor copies of the weights.
inline PfnRefs<EagerBackend> make_refs(const PfnWeights& w) {
    PfnRefs<EagerBackend> r;
    r.feature_proj = w.feature_proj;
    r.label_embed = w.label_embed;
    r.layers.resize(w.layers.size());
    for (size_t l = 0; l < w.layers.size(); ++l) {
        const auto& s = w.layers[l];
        auto& d = r.layers[l];
        d.wq = s.wq; d.wk = s.wk; d.wv = s.wv; d.wo = s.wo;
        d.ln1_g = s.ln1_g; d.ln1_b = s.ln1_b; d.ln2_g = s.ln2_g; d.ln2_b = s.ln2_b;
        d.ff_w1 = s.ff_w1; d.ff_b1 = s.ff_b1; d.ff_w2 = s.ff_w2; d.ff_b2 = s.ff_b2;
    }
    r.final_ln_g = w.final_ln_g;
    r.final_ln_b = w.final_ln_b;
    r.head_w = w.head_w;
    r.head_b = w.head_b;
    return r;
}

// Graph refs register every weight as a parameter node, in visit order.
inline PfnRefs<GraphBackend> make_refs(const PfnWeights& w, ad::Graph& g,
                                       std::vector<int>* param_ids) {
    PfnRefs<GraphBackend> r;
    r.layers.resize(w.layers.size());
    std::vector<std::pair<std::string, const Tensor*>> named;
    w.for_each_tensor([&](const std::string& name, const Tensor& t) {
        named.emplace_back(name, &t);
    });
    size_t li = 0;
    // register in the same order as visit() so gradients line up
    auto reg = [&](const Tensor& t) {
        int id = g.param(t);
        if (param_ids) param_ids->push_back(id);
        return id;
    };
    r.feature_proj = reg(w.feature_proj);
    r.label_embed = reg(w.label_embed);
    for (li = 0; li < w.layers.size(); ++li) {
        const auto& s = w.layers[li];
        auto& d = r.layers[li];
        d.wq = reg(s.wq); d.wk = reg(s.wk); d.wv = reg(s.wv); d.wo = reg(s.wo);
        d.ln1_g = reg(s.ln1_g); d.ln1_b = reg(s.ln1_b);
        d.ln2_g = reg(s.ln2_g); d.ln2_b = reg(s.ln2_b);
        d.ff_w1 = reg(s.ff_w1); d.ff_b1 = reg(s.ff_b1);
        d.ff_w2 = reg(s.ff_w2); d.ff_b2 = reg(s.ff_b2);
    }
    r.final_ln_g = reg(w.final_ln_g);
    r.final_ln_b = reg(w.final_ln_b);
    r.head_w = reg(w.head_w);
    r.head_b = reg(w.head_b);
    (void)named;
    return r;
}

/// Full transformer: token projection, n_layers pre-norm blocks with masked
/// multi-head attention, final norm, class head. Returns logits for all
/// tokens; callers pick out the query rows.
template <class B>
typename B::Ref pfn_logits(B& bk, const PfnRefs<B>& p, const PfnConfig& cfg,
                           const Tensor& x_train, const std::vector<int>& y_train,
                           const Tensor& x_test, int actual_features) {
    using Ref = typename B::Ref;
    if (x_train.dim(0) < 1) throw std::invalid_argument("pfn: empty context");
    if (actual_features < 0) actual_features = static_cast<int>(x_train.dim(1));
    int max_label = -1;
    for (int y : y_train) max_label = std::max(max_label, y);
    check_capacity(cfg, x_train.dim(1), max_label);

    const int n_train = static_cast<int>(x_train.dim(0));
    const int n_test = static_cast<int>(x_test.dim(0));
    Tensor x_all = Tensor::zeros({n_train + n_test, x_train.dim(1)});
    for (int64_t i = 0; i < n_train; ++i)
        std::copy_n(x_train.row_ptr(i), x_train.dim(1), x_all.row_ptr(i));
    for (int64_t i = 0; i < n_test; ++i)
        std::copy_n(x_test.row_ptr(i), x_test.dim(1), x_all.row_ptr(n_train + i));

    Ref x_in = bk.input(pad_features(x_all, actual_features, cfg));
    auto label_idx = std::make_shared<const std::vector<int>>(
        token_label_indices(y_train, n_test, cfg));
    Ref tokens = bk.add(bk.matmul(x_in, p.feature_proj), bk.table_rows(p.label_embed, label_idx));

    auto mask = std::make_shared<const BoolMatrix>(build_mask(n_train, n_test));
    const int dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Ref h = tokens;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& ly = p.layers[static_cast<size_t>(l)];
        Ref hn = bk.layer_norm(h, ly.ln1_g, ly.ln1_b);
        Ref q = bk.matmul(hn, ly.wq);
        Ref k = bk.matmul(hn, ly.wk);
        Ref v = bk.matmul(hn, ly.wv);
        std::vector<Ref> heads;
        heads.reserve(static_cast<size_t>(cfg.n_heads));
        for (int hd = 0; hd < cfg.n_heads; ++hd) {
            // scaling q up front avoids a full score-matrix copy
            Ref qh = bk.scale(bk.col_slice(q, static_cast<int64_t>(hd) * dh, dh), inv_sqrt_dh);
            Ref kh = bk.col_slice(k, static_cast<int64_t>(hd) * dh, dh);
            Ref vh = bk.col_slice(v, static_cast<int64_t>(hd) * dh, dh);
            Ref attw = bk.masked_softmax(bk.matmul(qh, bk.transpose(kh)), mask);
            heads.push_back(bk.matmul(attw, vh));
        }
        Ref attn = bk.dropout(bk.matmul(bk.concat_cols(heads), ly.wo));
        h = bk.add(h, attn);

        Ref hn2 = bk.layer_norm(h, ly.ln2_g, ly.ln2_b);
        Ref ff1 = bk.gelu(bk.add_rowvec(bk.matmul(hn2, ly.ff_w1), ly.ff_b1));
        Ref ff2 = bk.dropout(bk.add_rowvec(bk.matmul(ff1, ly.ff_w2), ly.ff_b2));
        h = bk.add(h, ff2);
    }
    Ref hf = bk.layer_norm(h, p.final_ln_g, p.final_ln_b);
    return bk.add_rowvec(bk.matmul(hf, p.head_w), p.head_b);
}

inline std::vector<int> present_classes(const std::vector<int>& y_train) {
    std::set<int> s(y_train.begin(), y_train.end());
    return std::vector<int>(s.begin(), s.end());
}

}  // namespace detail_pfn

// ---------------------------------------------------------------------------
// Online inference
// ---------------------------------------------------------------------------

/// Single forward pass: no parameter updates, bit-deterministic. The output
/// distribution is restricted to classes present in the context and
/// renormalized, so unseen classes get exactly zero probability.
inline Ppd infer(const PfnWeights& w, const Tensor& x_train, const std::vector<int>& y_train,
                 const Tensor& x_test, int actual_features = -1) {
    if (x_train.rank() != 2 || x_train.dim(0) < 1 || y_train.empty())
        throw std::invalid_argument("pfn::infer: context must be nonempty");
    if (x_train.dim(1) != x_test.dim(1))
        throw std::invalid_argument("pfn::infer: feature counts disagree");
    detail_pfn::EagerBackend bk;
    auto refs = detail_pfn::make_refs(w);
    Tensor logits = detail_pfn::pfn_logits(bk, refs, w.config, x_train, y_train, x_test,
                                           actual_features);
    const int n_train = static_cast<int>(x_train.dim(0));
    const int n_test = static_cast<int>(x_test.dim(0));

    std::vector<int> classes = detail_pfn::present_classes(y_train);
    const int k = static_cast<int>(classes.size());
    Ppd out;
    out.class_ids = classes;
    out.probs = Tensor::zeros({n_test, k});
    for (int i = 0; i < n_test; ++i) {
        const double* row = logits.row_ptr(n_train + i);
        double mx = -std::numeric_limits<double>::infinity();
        for (int c : classes) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int j = 0; j < k; ++j) {
            double e = std::exp(row[classes[static_cast<size_t>(j)]] - mx);
            out.probs.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < k; ++j) out.probs.at(i, j) /= denom;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Preprocessing-ensemble wrapper
// ---------------------------------------------------------------------------

/// Fits preprocessing on the raw context, then averages the PPD across
/// deterministic ensemble variants (feature rotation x power transform x
/// label rotation). Member 0 is the canonical plan, so n_members == 1
/// reduces to plain inference on canonically preprocessed data.
inline Ppd ensemble_infer(const PfnWeights& w, const Tensor& x_train_raw,
                          const std::vector<int>& y_train, const Tensor& x_test_raw,
                          int n_members) {
    if (n_members < 1) throw std::invalid_argument("pfn::ensemble_infer: n_members must be >= 1");
    if (x_train_raw.dim(0) < 1) throw std::invalid_argument("pfn::ensemble_infer: empty context");

    ColumnStats stats = fit(x_train_raw);
    std::vector<int> classes = detail_pfn::present_classes(y_train);
    const int k = static_cast<int>(classes.size());
    const int f = static_cast<int>(x_train_raw.dim(1));
    std::vector<int> class_pos(static_cast<size_t>(*std::max_element(classes.begin(), classes.end())) + 1, -1);
    for (int j = 0; j < k; ++j) class_pos[static_cast<size_t>(classes[static_cast<size_t>(j)])] = j;

    auto plans = build_ensemble_members(f, k, n_members);
    const int n_test = static_cast<int>(x_test_raw.dim(0));

    std::vector<Tensor> member_probs(static_cast<size_t>(n_members));
    parallel_for(n_members, [&](int64_t m) {
        const PreprocessPlan& plan = plans[static_cast<size_t>(m)];
        Tensor xtr = transform(x_train_raw, stats, plan);
        Tensor xte = transform(x_test_raw, stats, plan);
        // rotate labels within the present-class alphabet
        std::vector<int> y_rot(y_train.size());
        for (size_t i = 0; i < y_train.size(); ++i) {
            int pos = class_pos[static_cast<size_t>(y_train[i])];
            y_rot[i] = classes[static_cast<size_t>((pos + plan.label_rotation) % k)];
        }
        Ppd ppd = infer(w, xtr, y_rot, xte);
        // columns of ppd are sorted present classes; un-rotate back
        Tensor probs = Tensor::zeros({n_test, k});
        for (int j = 0; j < k; ++j) {
            int rotated = (j + plan.label_rotation) % k;
            for (int i = 0; i < n_test; ++i) probs.at(i, j) = ppd.probs.at(i, rotated);
        }
        member_probs[static_cast<size_t>(m)] = std::move(probs);
    });

    Ppd out;
    out.class_ids = classes;
    out.probs = Tensor::zeros({n_test, k});
    for (int m = 0; m < n_members; ++m)
        for (size_t i = 0; i < out.probs.data.size(); ++i)
            out.probs.data[i] += member_probs[static_cast<size_t>(m)].data[i];
    for (double& v : out.probs.data) v /= static_cast<double>(n_members);
    return out;
}

// ---------------------------------------------------------------------------
// Offline training
// ---------------------------------------------------------------------------

struct DivergenceError : std::runtime_error {
    int step;
    explicit DivergenceError(int s)
        : std::runtime_error("pfn training diverged (non-finite loss) at step " +
                             std::to_string(s)),
          step(s) {}
};

using TaskSampler = std::function<SyntheticTask(Rng&)>;

inline TaskSampler make_sampler(PriorConfig cfg) {
    cfg.validate();
    return [cfg](Rng& rng) { return sample_task(rng, cfg); };
}

inline TaskSampler make_sampler(DiscreteHypothesisPrior prior, int n_min, int n_max) {
    prior.validate();
    return [prior, n_min, n_max](Rng& rng) {
        return sample_discrete_task(rng, prior, n_min, n_max).task;
    };
}

struct TrainOptions {
    int steps = 2000;
    int batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    double clip_norm = 1.0;
};

struct TrainResult {
    PfnWeights weights;
    std::vector<double> loss_trace;  // one mean loss per step
};

/// Offline PFN training: each step samples a task batch from the prior,
/// records one graph per task, and averages query-position cross-entropy.
/// Gradients are reduced in batch order so results are independent of the
/// worker-thread count; the whole run is a pure function of (sampler, seed).
inline TrainResult train_offline(
    const TaskSampler& sampler, const PfnConfig& cfg, const TrainOptions& opt,
    const std::function<void(int, double, const PfnWeights&)>& on_step = {}) {
    cfg.validate();
    if (opt.steps < 1) throw std::invalid_argument("pfn::train_offline: steps must be >= 1");
    if (opt.batch_size < 1) throw std::invalid_argument("pfn::train_offline: batch_size must be >= 1");

    PfnWeights weights = PfnWeights::init(cfg, opt.seed);
    std::vector<Tensor*> params;
    weights.for_each_tensor([&](const std::string&, Tensor& t) { params.push_back(&t); });
    std::vector<AdamState> adam;
    adam.reserve(params.size());
    AdamHyper hyper;
    hyper.lr = opt.lr;
    for (Tensor* p : params) adam.push_back(AdamState::for_param(*p, hyper));

    Rng task_rng(mix_seed(opt.seed, 0x7a5cULL));
    TrainResult result;
    result.loss_trace.reserve(static_cast<size_t>(opt.steps));

    for (int step = 0; step < opt.steps; ++step) {
        std::vector<SyntheticTask> batch;
        batch.reserve(static_cast<size_t>(opt.batch_size));
        for (int b = 0; b < opt.batch_size; ++b) batch.push_back(sampler(task_rng));

        std::vector<std::vector<Tensor>> task_grads(static_cast<size_t>(opt.batch_size));
        std::vector<double> task_loss(static_cast<size_t>(opt.batch_size), 0.0);

        parallel_for(opt.batch_size, [&](int64_t b) {
            const SyntheticTask& task = batch[static_cast<size_t>(b)];
            const int n = static_cast<int>(task.x.dim(0));
            const int cut = task.cut;
            Tensor x_train = Tensor::zeros({cut, task.x.dim(1)});
            Tensor x_test = Tensor::zeros({n - cut, task.x.dim(1)});
            for (int i = 0; i < cut; ++i)
                std::copy_n(task.x.row_ptr(i), task.x.dim(1), x_train.row_ptr(i));
            for (int i = cut; i < n; ++i)
                std::copy_n(task.x.row_ptr(i), task.x.dim(1), x_test.row_ptr(i - cut));
            std::vector<int> y_train(task.y.begin(), task.y.begin() + cut);

            ad::Graph g;
            Rng drop_rng(mix_seed(opt.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(b)));
            detail_pfn::GraphBackend bk{&g, cfg.dropout, &drop_rng};
            std::vector<int> param_ids;
            auto refs = detail_pfn::make_refs(weights, g, &param_ids);
            int logits = detail_pfn::pfn_logits(bk, refs, cfg, x_train, y_train, x_test, -1);

            auto qlabels = std::make_shared<std::vector<int>>(task.y.begin() + cut, task.y.end());
            auto qrows = std::make_shared<std::vector<int>>();
            qrows->reserve(static_cast<size_t>(n - cut));
            for (int i = cut; i < n; ++i) qrows->push_back(i);
            int loss = g.cross_entropy(logits, qlabels, qrows);
            g.backward(loss);

            task_loss[static_cast<size_t>(b)] = g.value(loss).data[0];
            auto& grads = task_grads[static_cast<size_t>(b)];
            grads.reserve(param_ids.size());
            for (int id : param_ids) grads.push_back(g.grad(id));
        });

        double mean_loss = 0.0;
        for (double l : task_loss) mean_loss += l;
        mean_loss /= static_cast<double>(opt.batch_size);
        if (!std::isfinite(mean_loss)) throw DivergenceError(step);
        result.loss_trace.push_back(mean_loss);

        // reduce in batch order, then clip the global norm
        std::vector<Tensor> mean_grads;
        mean_grads.reserve(params.size());
        for (size_t p = 0; p < params.size(); ++p) {
            Tensor acc = task_grads[0][p];
            for (int b = 1; b < opt.batch_size; ++b)
                for (size_t i = 0; i < acc.data.size(); ++i)
                    acc.data[i] += task_grads[static_cast<size_t>(b)][p].data[i];
            for (double& v : acc.data) v /= static_cast<double>(opt.batch_size);
            mean_grads.push_back(std::move(acc));
        }
        double sq = 0.0;
        for (const Tensor& t : mean_grads)
            for (double v : t.data) sq += v * v;
        if (!std::isfinite(sq)) throw DivergenceError(step);
        if (opt.clip_norm > 0 && sq > opt.clip_norm * opt.clip_norm) {
            double s = opt.clip_norm / std::sqrt(sq);
            for (Tensor& t : mean_grads)
                for (double& v : t.data) v *= s;
        }
        for (size_t p = 0; p < params.size(); ++p)
            adam_step(*params[p], mean_grads[p], adam[p]);

        if (on_step) on_step(step, mean_loss, weights);
    }
    result.weights = std::move(weights);
    return result;
}

}  // namespace pfncast
