#pragma once

#include <cmath>
#include <cstdint>
#include <map>

#include "causim/numcore/tape.hpp"
#include "causim/numcore/tensor.hpp"

namespace causim::num {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t t = 0;
    std::map<ParamId, Tensor> m;
    std::map<ParamId, Tensor> v;

    AdamState() = default;
    explicit AdamState(AdamConfig c) : config(c) {}
};

/// Bias-corrected Adam update. Parameters absent from `grads` keep their value
/// but the step counter still advances once per call.
inline void adam_step(AdamState& state, ParameterSet& params, const Gradients& grads) {
    for (const auto& [id, g] : grads) {
        require(id < params.size(), "adam_step: gradient for unknown parameter");
        require(g.same_shape(params[id].value), "adam_step: gradient shape mismatch for " + params[id].name);
        if (auto it = state.m.find(id); it != state.m.end())
            require(it->second.same_shape(g), "adam_step: moment shape mismatch for " + params[id].name);
    }
    state.t += 1;
    const AdamConfig& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    for (const auto& [id, g] : grads) {
        Tensor& p = params[id].value;
        auto [mit, m_new] = state.m.try_emplace(id, g.rows(), g.cols());
        auto [vit, v_new] = state.v.try_emplace(id, g.rows(), g.cols());
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

}  // namespace causim::num
