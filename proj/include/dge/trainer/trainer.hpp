#pragma once

#include "dge/model/delta_model.hpp"
#include "dge/numkit/adam.hpp"
#include "dge/numkit/rng.hpp"
#include "dge/synth/synth_world.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dge::trainer {

using model::LatentVector;
using model::LossWeights;
using model::ModelParams;
using numkit::AdamState;
using numkit::Rng;
using numkit::Vector;
using synth::Dataset;

struct NoiseConfig {
    // Standard deviation in units of the per-dimension std of the train latents.
    double sigma = 0.5;
    // One draw per class per batch (a_i and a_j share n_a); false draws per latent.
    bool shared_per_class = true;

    friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

struct ModelConfig {
    std::size_t d_delta = 8;
    std::size_t decoder_hidden = 64;
    double leaky_slope = 0.25;
    double dropout_p = 0.2;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
    std::size_t epochs = 10000;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    bool decoupled_weight_decay = false;
    ModelConfig model;
    LossWeights loss;
    NoiseConfig noise;
    std::uint64_t seed = 1;
    // Integer scales of the pair's code used for the linearity term; targets must stay in range.
    std::vector<int> linearity_alphas = {0, 1, 2};
    // Linearity targets drawn per pair (0 = all valid targets).
    std::size_t linearity_samples = 4;
    // Class A/B roles and (i, j) order swap between batches.
    bool role_swap = true;
    // The antisymmetry penalty also sees the (a_i, a_i) self pair.
    bool antisym_self_pair = true;
    // 0 disables periodic checkpoints; the final checkpoint is written whenever a path is set.
    std::size_t checkpoint_interval = 0;
    std::string checkpoint_path;
    // Stop when the mean total loss of the last window improves on the window before
    // it by less than this fraction. 0 disables early stopping.
    std::size_t convergence_window = 500;
    double convergence_threshold = 1e-4;

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
    double total = 0.0;
    double identity = 0.0;
    double transfer = 0.0;
    double antisym = 0.0;
    double linear = 0.0;
    double orthonorm = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

// Everything needed to continue a run bit-exactly.
struct TrainState {
    ModelParams params;
    AdamState optimizer;
    Rng rng;
    TrainHistory history;
    bool converged = false;

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct LinearityTargetInfo {
    std::size_t base_index = 0;
    int alpha = 0;
    std::size_t target_index = 0;
};

struct TrainingBatch {
    // Post-noise latents: a_i/a_j carry n_a, b_i/b_j carry n_b.
    model::ResidualSample sample;
    std::size_t seq_a = 0, seq_b = 0;
    std::size_t class_a = 0, class_b = 0;
    std::size_t attribute = 0;
    std::size_t i = 0, j = 0;
    std::vector<model::LinearityTarget> linearity;
    std::vector<LinearityTargetInfo> linearity_info;
    // One unit-step (k, k+1) pair of class A per attribute, same noise as the A latents.
    std::vector<std::pair<LatentVector, LatentVector>> unit_steps;
};

struct BatchOptions {
    NoiseConfig noise;
    std::vector<int> linearity_alphas = {0, 1, 2};
    std::size_t linearity_samples = 4;
    bool role_swap = true;
};

BatchOptions batch_options(const TrainConfig& config);

// Per-dimension standard deviation over all train-split latents.
Vector dimension_std(const Dataset& dataset);

// Random sequence of class A, ordered (i, j), class B from the other train classes.
// noise_scale is dimension_std(dataset).
TrainingBatch make_batch(const Dataset& dataset, Rng& rng, const BatchOptions& options, const Vector& noise_scale);

// Batch for a given A sequence and pair; class B and the noise are drawn from rng.
TrainingBatch make_batch_for(const Dataset& dataset, std::size_t seq_a, std::size_t i, std::size_t j, Rng& rng,
                             const BatchOptions& options, const Vector& noise_scale);

struct CompositeLoss {
    EpochRecord components;  // unweighted terms; total is the weighted sum
    model::ModelGradients grads;
};

// λ-weighted residual + antisymmetry + linearity + orthonormality loss of one batch.
CompositeLoss composite_loss(const ModelParams& params, const TrainingBatch& batch, const TrainConfig& config,
                             Rng& rng, bool training = true);

TrainState init_train_state(const Dataset& dataset, const TrainConfig& config);

// One pass over every ordered (i, j) pair of every train sequence (shuffled), one
// Adam step per pair. Appends the epoch's mean loss record to the history.
// Throws TrainingError naming the component when a loss or gradient is not finite.
EpochRecord train_epoch(TrainState& state, const Dataset& dataset, const TrainConfig& config);

using EpochCallback = std::function<void(const TrainState&)>;

// Runs epochs until history holds config.epochs records or the loss plateaus.
// Starts from `resume` when given. Writes checkpoints per config.
TrainState train(const Dataset& dataset, const TrainConfig& config, std::optional<TrainState> resume = std::nullopt,
                 const EpochCallback& on_epoch = {});

}  // namespace dge::trainer
