#pragma once

#include <cmath>
#include <stdexcept>

#include "pfncast/tensor.hpp"

namespace pfncast {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter Adam moments plus the shared step counter.
struct AdamState {
    int64_t step = 0;
    Tensor m, v;
    AdamHyper hyper;

    static AdamState for_param(const Tensor& p, AdamHyper h = {}) {
        AdamState s;
        s.m = Tensor::zeros(p.shape);
        s.v = Tensor::zeros(p.shape);
        s.hyper = h;
        return s;
    }
};

/// One bias-corrected Adam update, in place.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
    check_same_shape(param, grad, "adam_step");
    check_same_shape(param, state.m, "adam_step(m)");
    state.step += 1;
    const AdamHyper& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < param.data.size(); ++i) {
        double g = grad.data[i];
        state.m.data[i] = h.beta1 * state.m.data[i] + (1.0 - h.beta1) * g;
        state.v.data[i] = h.beta2 * state.v.data[i] + (1.0 - h.beta2) * g * g;
        double mhat = state.m.data[i] / bc1;
        double vhat = state.v.data[i] / bc2;
        param.data[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
}

}  // namespace pfncast
