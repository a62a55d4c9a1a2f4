#pragma once

#include "dge/model/delta_model.hpp"
#include "dge/numkit/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dge::synth {

using model::LatentShape;
using model::LatentVector;
using numkit::Matrix;
using numkit::Vector;

struct WorldConfig {
    std::uint64_t seed = 7;
    // Only style_rows/style_dim matter here.
    LatentShape shape;
    std::size_t n_classes = 4;
    std::size_t n_attributes = 2;
    double curvature = 1.0;
    // Attribute range in attribute units (degrees for the pose analog).
    double range_lo = -30.0;
    double range_hi = 30.0;

    void validate() const;
    friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

/// Ground-truth factor -> latent map Ψ(class, attributes).
///
/// Ψ = offset + A·z + curvature · W3·tanh(W2·tanh(W1·z + b1) + b2), where
/// z = [class embedding (unit, 8-d) ‖ attributes / max(|lo|,|hi|)]. With
/// curvature 0 the map is affine in the attributes. Construction re-derives the
/// weights until every default sequence path bends by more than 1% of its chord
/// (curvature > 0) and all grid latents are pairwise distinct.
class OracleWorld {
public:
    static constexpr std::size_t kEmbeddingDim = 8;
    static constexpr std::size_t kHidden = 32;
    // Points per sequence used by the construction-time checks.
    static constexpr std::size_t kProbePoints = 11;

    explicit OracleWorld(const WorldConfig& config);

    const WorldConfig& config() const { return config_; }
    const LatentShape& shape() const { return config_.shape; }
    std::size_t n_classes() const { return config_.n_classes; }
    std::size_t n_attributes() const { return config_.n_attributes; }
    // How many weight draws construction needed (1 = the first draw passed).
    std::size_t draws() const { return draws_; }

    // Ψ(class_id, attributes); attributes.size() == n_attributes.
    LatentVector map(std::size_t class_id, std::span<const double> attributes) const;
    // Ψ with one attribute at t and all others at 0.
    LatentVector map_single(std::size_t class_id, std::size_t attribute_id, double t) const;

    std::span<const double> class_embedding(std::size_t class_id) const { return embeddings_.row(class_id); }

private:
    void draw(std::uint64_t seed);
    bool acceptable() const;
    void check_class(std::size_t class_id) const;

    WorldConfig config_;
    std::size_t draws_ = 0;
    double attribute_scale_ = 1.0;
    Matrix embeddings_;  // n_classes x 8
    Vector offset_;      // F
    Matrix affine_;      // (8 + n_attr) x F
    Matrix w1_;          // (8 + n_attr) x H
    Vector b1_;
    Matrix w2_;  // H x H
    Vector b2_;
    Matrix w3_;  // H x F
};

OracleWorld build_oracle(std::uint64_t seed, const LatentShape& shape, std::size_t n_classes,
                         std::size_t n_attributes, double curvature);

// Latents of one class varying one attribute.
struct AttributeSequence {
    std::size_t class_id = 0;
    std::size_t attribute_id = 0;
    Vector attribute_values;  // strictly increasing
    std::vector<LatentVector> latents;

    std::size_t size() const { return latents.size(); }
    // Spacing of the attribute values (the sequences this library generates are uniform).
    double step() const { return attribute_values[1] - attribute_values[0]; }
};

enum class Split { train, heldout };

struct Dataset {
    WorldConfig world_config;
    std::vector<AttributeSequence> sequences;
    std::vector<std::size_t> train_classes;
    std::vector<std::size_t> heldout_classes;

    Split split_of(std::size_t class_id) const;
    std::vector<std::size_t> sequences_in(Split split) const;
    std::vector<std::size_t> sequences_in(Split split, std::size_t attribute_id) const;
    // Throws InvalidInput on an empty or overlapping split, a class without a split,
    // an attribute missing a train or held-out sequence, or a sequence shorter than 3.
    void validate() const;
};

// One sequence per class for the given attribute. t_values must be strictly
// increasing with at least 3 entries.
std::vector<AttributeSequence> generate_sequences(const OracleWorld& world, std::span<const std::size_t> class_ids,
                                                  std::size_t attribute_id, std::span<const double> t_values);

// Every attribute for every listed class, validated.
Dataset build_dataset(const OracleWorld& world, std::span<const std::size_t> train_classes,
                      std::span<const std::size_t> heldout_classes, std::span<const double> t_values);

// n evenly spaced values from lo to hi inclusive.
Vector linspace(double lo, double hi, std::size_t n);

/// Nearest-preimage attribute recovery along one attribute axis of one class.
///
/// Scans a grid of step at most 0.1 attribute units over the world's range, then
/// refines around the best grid point by ternary search to 1e-3. Results are
/// clamped to the range. The grid is evaluated once at construction.
class AttributeRecoverer {
public:
    AttributeRecoverer(const OracleWorld& world, std::size_t class_id, std::size_t attribute_id);
    double recover(const LatentVector& latent) const;

private:
    const OracleWorld* world_;
    std::size_t class_id_;
    std::size_t attribute_id_;
    Vector grid_t_;
    std::vector<LatentVector> grid_latents_;
};

double recover_attribute(const OracleWorld& world, const LatentVector& latent, std::size_t class_id,
                         std::size_t attribute_id);

}  // namespace dge::synth
