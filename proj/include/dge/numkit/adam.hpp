#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dge::numkit {

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // false: grad += weight_decay * param before the moment update (L2 coupling).
    // true: param -= lr * weight_decay * param after the Adam step (AdamW).
    bool decoupled_weight_decay = false;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

AdamState make_adam(std::size_t parameter_count, double lr = 1e-4, double weight_decay = 1e-5);

// One bias-corrected Adam update over parameter blocks laid out back to back.
// grads must mirror params block by block; state.m/v cover the concatenation.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state);

}  // namespace dge::numkit
