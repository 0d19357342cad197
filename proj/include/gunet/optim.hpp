#pragma once

// Adam with bias correction and the warm-up + stepwise exponential decay
// learning-rate schedule used for training.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gunet/error.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

/// Ordered (name, tensor) list. The order is the checkpoint order.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState for_params(const NamedParams& params) {
        AdamState s;
        for (const auto& [name, t] : params) {
            s.m.emplace_back(t.numel(), 0.0);
            s.v.emplace_back(t.numel(), 0.0);
        }
        return s;
    }
};

/// One Adam update using the gradients currently stored on `params`.
/// Gradients are left in place; clearing them is the caller's job.
inline void adam_step(NamedParams& params, AdamState& state, double lr) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ConfigError("adam_step: optimizer state was built for a different parameter set");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& [name, t] = params[k];
        if (!t.has_grad()) throw NumericError("adam_step: parameter '" + name + "' has no gradient");
        if (state.m[k].size() != t.numel()) throw ConfigError("adam_step: moment buffer size differs for '" + name + "'");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& t = params[k].second;
        auto w = t.data_mut();
        const auto g = t.grad();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

inline void zero_grads(NamedParams& params) {
    for (auto& [name, t] : params) t.zero_grad();
}

struct LrSchedule {
    std::size_t warmup_steps = 2000;
    double base_lr = 0.002;
    double decay_rate = 0.98;
    std::size_t decay_interval = 100;
    double min_lr = 0.0002;

    void validate() const {
        if (!(min_lr > 0.0) || min_lr > base_lr) throw ConfigError("lr schedule: need 0 < min_lr <= base_lr");
        if (decay_interval < 1) throw ConfigError("lr schedule: decay_interval must be >= 1");
    }
};

/// Linear ramp from 0 to base_lr over the warm-up, then
/// base_lr * decay_rate^floor((step - warmup) / interval), floored at min_lr.
inline double lr_at(const LrSchedule& s, std::size_t step) {
    if (step < s.warmup_steps) {
        return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    }
    const auto decays = (step - s.warmup_steps) / s.decay_interval;
    const double lr = s.base_lr * std::pow(s.decay_rate, static_cast<double>(decays));
    return std::max(lr, s.min_lr);
}

}  // namespace gunet
