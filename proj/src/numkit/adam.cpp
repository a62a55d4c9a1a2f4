#include "dge/numkit/adam.hpp"

#include "dge/errors.hpp"

#include <cmath>
#include <string>

namespace dge::numkit {

AdamState make_adam(std::size_t parameter_count, double lr, double weight_decay) {
    AdamState s;
    s.m.assign(parameter_count, 0.0);
    s.v.assign(parameter_count, 0.0);
    s.lr = lr;
    s.weight_decay = weight_decay;
    return s;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameter blocks but " +
                             std::to_string(grads.size()) + " gradient blocks");
    }
    std::size_t total = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size()) {
            throw DimensionError("adam_step: block " + std::to_string(b) + " has " +
                                 std::to_string(params[b].size()) + " parameters but " +
                                 std::to_string(grads[b].size()) + " gradients");
        }
        total += params[b].size();
    }
    if (state.m.size() != total || state.v.size() != total) {
        throw DimensionError("adam_step: optimizer state sized " + std::to_string(state.m.size()) +
                             ", parameters total " + std::to_string(total));
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    const double coupled_wd = state.decoupled_weight_decay ? 0.0 : state.weight_decay;
    const double decoupled_wd = state.decoupled_weight_decay ? state.lr * state.weight_decay : 0.0;

    std::size_t offset = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto p = params[b];
        const auto g = grads[b];
        double* m = state.m.data() + offset;
        double* v = state.v.data() + offset;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] + coupled_wd * p[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps) + decoupled_wd * p[i];
        }
        offset += p.size();
    }
}

}  // namespace dge::numkit
