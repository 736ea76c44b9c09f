#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bccn/tensor.hpp"

namespace bccn {

struct SgdConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// Momentum SGD state: one velocity buffer per parameter, index-aligned.
struct OptimizerState {
    SgdConfig config;
    std::vector<std::vector<double>> velocity;
};

inline OptimizerState init_optimizer(const std::vector<Tensor>& params, SgdConfig config = {}) {
    OptimizerState state;
    state.config = config;
    state.velocity.reserve(params.size());
    for (const Tensor& p : params) state.velocity.emplace_back(p.numel(), 0.0);
    return state;
}

inline void zero_grads(std::vector<Tensor>& params) {
    for (Tensor& p : params) p.zero_grad();
}

/// v' = momentum * v + g + weight_decay * p;  p' = p - lr * v'.
/// Reads gradients accumulated by backward(); parameters must be leaves.
inline void sgd_step(std::vector<Tensor>& params, OptimizerState& state) {
    if (params.size() != state.velocity.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(state.velocity.size()) + " velocity buffers");
    }
    const SgdConfig& c = state.config;
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& v = state.velocity[i];
        if (v.size() != params[i].numel()) {
            throw ShapeError("sgd_step: velocity buffer " + std::to_string(i) + " has length " +
                             std::to_string(v.size()) + ", parameter has " +
                             std::to_string(params[i].numel()));
        }
        const std::vector<double>& g = params[i].grad();
        std::vector<double>& p = params[i].leaf_data();
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = c.momentum * v[j] + g[j] + c.weight_decay * p[j];
            p[j] -= c.lr * v[j];
        }
    }
}

}  // namespace bccn
