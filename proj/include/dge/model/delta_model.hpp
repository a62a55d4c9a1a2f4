#pragma once

#include "dge/numkit/matrix.hpp"
#include "dge/numkit/mlp.hpp"
#include "dge/numkit/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dge::model {

using numkit::Matrix;
using numkit::MlpParams;
using numkit::MlpSpec;
using numkit::Rng;
using numkit::Vector;

// Latent layout (style rows x style dimension) and the width of a difference code.
// StyleGAN2's W+ is 18x512 with 64-wide codes; the desk default is 4x32 with 8.
struct LatentShape {
    std::size_t style_rows = 4;
    std::size_t style_dim = 32;
    std::size_t d_delta = 8;

    std::size_t flat_size() const { return style_rows * style_dim; }
    void validate() const;

    friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

// A flattened latent, style rows laid out one after another.
struct LatentVector {
    Vector values;

    std::size_t size() const { return values.size(); }
    friend bool operator==(const LatentVector&, const LatentVector&) = default;
};

// A learned semantic-difference code.
struct DeltaCode {
    Vector values;

    std::size_t size() const { return values.size(); }
    friend bool operator==(const DeltaCode&, const DeltaCode&) = default;
};

/// Encoder and residual decoder.
///
/// Encoder: [a_i ‖ a_j] (2F) -> d -> d -> d -> d.
/// Decoder: [α·Δ ‖ base] (d + F) -> h -> h -> h -> F, output added to base.
struct ModelParams {
    LatentShape shape;
    std::size_t decoder_hidden = 64;
    MlpSpec encoder_spec;
    MlpSpec decoder_spec;
    MlpParams encoder;
    MlpParams decoder;

    std::size_t parameter_count() const { return encoder.parameter_count() + decoder.parameter_count(); }
    // Encoder blocks then decoder blocks, each in w0, b0, w1, b1, ... order.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    bool all_finite() const { return encoder.all_finite() && decoder.all_finite(); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct ModelGradients {
    MlpParams encoder;
    MlpParams decoder;

    static ModelGradients zeros(const ModelParams& params);
    std::vector<std::span<const double>> blocks() const;
    Vector flatten() const;
    void add_scaled(const ModelGradients& other, double alpha);
    bool all_finite() const { return encoder.all_finite() && decoder.all_finite(); }
};

struct LossWeights {
    double lambda1 = 1.0;           // seen class (identity)
    double lambda2 = 1.0;           // other class (transfer)
    double lambda_antisym = 0.1;
    double lambda_linear = 1.0;
    double lambda_orthonorm = 0.01;

    // All non-negative and finite, at least one of lambda1/lambda2 positive.
    void validate() const;
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Encoder/decoder layer sizes implied by the shape.
MlpSpec encoder_spec(const LatentShape& shape, double leaky_slope = 0.25, double dropout_p = 0.2);
MlpSpec decoder_spec(const LatentShape& shape, std::size_t decoder_hidden, double leaky_slope = 0.25,
                     double dropout_p = 0.2);

// Glorot-uniform weights from a generator seeded with `seed`, zero biases.
ModelParams init_model(const LatentShape& shape, std::size_t decoder_hidden, std::uint64_t seed,
                       double leaky_slope = 0.25, double dropout_p = 0.2);

// Zeroes the decoder's output layer so every edit returns its base unchanged.
void zero_decoder_output(ModelParams& params);

// Δ = E(a_i, a_j). Argument order matters.
DeltaCode encode(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j, Rng& rng,
                 bool training);

// base + D([alpha·Δ ‖ base]).
LatentVector decode_edit(const ModelParams& params, const LatentVector& base, const DeltaCode& delta,
                         double alpha, Rng& rng, bool training);

// ---------------------------------------------------------------------------
// Loss terms. Each returns its value and d(value)/d(params); dropout masks are
// drawn from rng (encoder first, then decoder) when training is set.

struct LossResult {
    double value = 0.0;
    ModelGradients grads;
};

struct ResidualSample {
    LatentVector a_i, a_j, b_i, b_j;
};

struct ResidualLossResult {
    double value = 0.0;     // lambda1·identity + lambda2·transfer
    double identity = 0.0;  // ‖a_j − â_j‖²
    double transfer = 0.0;  // ‖b_j − b̂_j‖²
    ModelGradients grads;
};

// Δ = E(a_i, a_j), â_j = decode_edit(a_i, Δ, 1), b̂_j = decode_edit(b_i, Δ, 1).
ResidualLossResult residual_loss(const ModelParams& params, const ResidualSample& sample,
                                 const LossWeights& weights, Rng& rng, bool training = true);

// ‖E(a_i, a_j) + E(a_j, a_i)‖².
LossResult antisymmetry_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                             Rng& rng, bool training = true);

struct LinearityTerm {
    std::size_t base_index = 0;
    int alpha = 0;
    std::size_t target_index = 0;
    friend bool operator==(const LinearityTerm&, const LinearityTerm&) = default;
};

// Every (k, α) with k and k + α(j − i) inside [0, n).
std::vector<LinearityTerm> linearity_terms(std::size_t n, std::size_t i, std::size_t j,
                                           std::span<const int> alphas);

struct LinearityTarget {
    LatentVector base;
    double alpha = 1.0;
    LatentVector target;
};

// Σ ‖target − decode_edit(base, Δ, α)‖² with Δ = E(a_i, a_j) encoded once.
LossResult linearity_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                          std::span<const LinearityTarget> targets, Rng& rng, bool training = true);

// All valid terms of one sequence. Throws InvalidInput when none is in range.
LossResult linearity_loss(const ModelParams& params, std::span<const LatentVector> sequence, std::size_t i,
                          std::size_t j, std::span<const int> alphas, Rng& rng, bool training = true);

struct OrthonormLossResult {
    double value = 0.0;
    // Same grouping as the input codes.
    std::vector<std::vector<Vector>> grads;
};

// Σ (‖Δ‖ − 1)² over every code plus Σ ⟨Δ_p, Δ_q⟩² over codes of distinct groups.
// Each group holds unit-step codes of one attribute.
OrthonormLossResult orthonorm_loss(const std::vector<std::vector<DeltaCode>>& groups);

// ---------------------------------------------------------------------------
// Accumulating forms: add scale·d(value)/d(params) into grads (same rng draws as
// the forms above) and return the unweighted value(s).

struct ResidualTerms {
    double identity = 0.0;
    double transfer = 0.0;
};

ResidualTerms accumulate_residual_loss(const ModelParams& params, const ResidualSample& sample,
                                       const LossWeights& weights, Rng& rng, bool training, double scale,
                                       ModelGradients& grads);
double accumulate_antisymmetry_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                                    Rng& rng, bool training, double scale, ModelGradients& grads);
double accumulate_linearity_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                                 std::span<const LinearityTarget> targets, Rng& rng, bool training, double scale,
                                 ModelGradients& grads);

// ---------------------------------------------------------------------------
// Batched passes shared by the loss terms and the trainer.

struct EncoderPass {
    Matrix codes;  // rows x d_delta
    numkit::MlpTape tape;
};

// Row r encodes (firsts[r], seconds[r]).
EncoderPass encode_rows(const ModelParams& params, std::span<const LatentVector* const> firsts,
                        std::span<const LatentVector* const> seconds, Rng& rng, bool training);

// Backpropagates d(loss)/d(codes) into the encoder gradients.
void encoder_backward(const ModelParams& params, const EncoderPass& pass, const Matrix& grad_codes,
                      ModelGradients& grads);

}  // namespace dge::model
