#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "rnnlab/rng.hpp"
#include "rnnlab/tensor.hpp"

namespace rnnlab {

using NamedTensors = std::map<std::string, Tensor>;

// Uniform Xavier: entries i.i.d. on [-b, b) with b = sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, SplitMix64& rng) {
    if (fan_in < 1 || fan_out < 1) {
        fail("xavier_init: fans must be positive, got " + std::to_string(fan_in) + ", " +
             std::to_string(fan_out));
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(Shape{fan_in, fan_out});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

inline void clip_gradients_inplace(Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i] > 1.0) g[i] = 1.0;
        else if (g[i] < -1.0) g[i] = -1.0;
    }
}

// Elementwise clip to [-1, 1].
inline NamedTensors clip_gradients(NamedTensors grads) {
    for (auto& [name, g] : grads) clip_gradients_inplace(g);
    return grads;
}

struct AdamState {
    std::uint64_t step_count = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    NamedTensors m;
    NamedTensors v;

    void reset_moments(const NamedTensors& params) {
        m.clear();
        v.clear();
        for (const auto& [name, p] : params) {
            m.emplace(name, Tensor(p.dims()));
            v.emplace(name, Tensor(p.dims()));
        }
    }
};

// Standard Adam update with bias correction; moments are created lazily on
// first use so the state can be checkpointed as plain named tensors.
inline void adam_step(AdamState& state, NamedTensors& params, const NamedTensors& grads) {
    if (state.m.empty()) state.reset_moments(params);
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) fail("adam_step: no gradient for parameter '" + name + "'");
        const Tensor& g = git->second;
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        if (!p.same_shape(g) || !p.same_shape(m)) {
            fail("adam_step: shape mismatch for '" + name + "': param " + shape_str(p.dims()) +
                 " grad " + shape_str(g.dims()) + " moment " + shape_str(m.dims()));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace rnnlab
