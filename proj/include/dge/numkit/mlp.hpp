#pragma once

#include "dge/numkit/matrix.hpp"
#include "dge/numkit/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace dge::numkit {

struct MlpSpec {
    // input, hidden..., output
    std::vector<std::size_t> layer_sizes;
    double leaky_slope = 0.25;
    double dropout_p = 0.2;

    std::size_t num_layers() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }

    // Throws InvalidInput when fewer than two sizes, a zero size, or slope/p out of range.
    void validate() const;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Weights of layer l are (layer_sizes[l] x layer_sizes[l+1]); biases have the output width.
// The same type holds gradients.
struct MlpParams {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static MlpParams zeros(const MlpSpec& spec);

    std::size_t parameter_count() const;
    // Mutable views in declaration order: w0, b0, w1, b1, ...
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;

    void set_zero();
    // this += alpha * other
    void add_scaled(const MlpParams& other, double alpha);
    bool all_finite() const;
    bool matches(const MlpSpec& spec) const;

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Uniform in ±sqrt(6/(fan_in+fan_out)) per weight, zero biases.
MlpParams init_mlp(const MlpSpec& spec, Rng& rng);

// Everything the backward pass needs from a forward pass.
struct MlpTape {
    // Input to each linear layer (layer_inputs[0] is the network input).
    std::vector<Matrix> layer_inputs;
    // Linear outputs of the hidden layers, before the activation.
    std::vector<Matrix> pre_activations;
    // Dropout multipliers of the hidden layers.
    std::vector<Matrix> masks;
};

struct MlpForward {
    Matrix output;
    MlpTape tape;
};

// linear -> leaky_relu -> dropout for every hidden layer, linear only for the last.
// Each row of x is an independent sample.
MlpForward mlp_forward(const MlpSpec& spec, const MlpParams& params, const Matrix& x, Rng& rng,
                       bool training);

struct MlpBackward {
    MlpParams grads;
    Matrix grad_input;
};

// Reverse-mode pass reusing the tape's dropout masks.
MlpBackward mlp_backward(const MlpSpec& spec, const MlpParams& params, const MlpTape& tape,
                         const Matrix& grad_output);

// As mlp_backward but adds into an existing gradient accumulator; returns d/d(input).
Matrix mlp_backward_accumulate(const MlpSpec& spec, const MlpParams& params, const MlpTape& tape,
                               const Matrix& grad_output, MlpParams& grads);

}  // namespace dge::numkit
