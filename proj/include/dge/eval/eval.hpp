#pragma once

#include "dge/model/delta_model.hpp"
#include "dge/numkit/matrix.hpp"
#include "dge/numkit/rng.hpp"
#include "dge/synth/synth_world.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace dge::eval {

using model::DeltaCode;
using model::LatentVector;
using model::ModelParams;
using numkit::Matrix;
using numkit::Rng;
using numkit::Vector;
using synth::Dataset;
using synth::OracleWorld;

// Latents visited while sweeping the edit scale over `alphas`.
struct EditPath {
    LatentVector base;
    std::vector<LatentVector> points;
    Vector alphas;

    // At least two points, one per alpha, alphas strictly increasing.
    void validate() const;
};

// b_i + alpha·(a_j − a_i).
LatentVector linear_baseline_edit(const LatentVector& a_i, const LatentVector& a_j, const LatentVector& b_i,
                                  double alpha);

// Δ = E(a_i, a_j) once, then decode_edit(base, Δ, α) for each α (eval mode).
EditPath model_edit_path(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                         const LatentVector& base, std::span<const double> alphas);
EditPath linear_edit_path(const LatentVector& a_i, const LatentVector& a_j, const LatentVector& base,
                          std::span<const double> alphas);

// Throws InvalidInput when either vector is zero.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Identity descriptors for one oracle class along one attribute axis.
///
/// The descriptor of a latent is its residual from the class's attribute curve,
/// latent − Ψ(c, t̂) with t̂ the recovered attribute, added to the class's
/// identity anchor Ψ(c, 0) − mean over classes of Ψ(·, 0). A pure attribute
/// sweep therefore has the same descriptor at every point.
class IdentityProbe {
public:
    IdentityProbe(const OracleWorld& world, std::size_t class_id, std::size_t attribute_id);
    Vector descriptor(const LatentVector& latent) const;

private:
    const OracleWorld* world_;
    synth::AttributeRecoverer recoverer_;
    std::size_t class_id_;
    std::size_t attribute_id_;
    Vector anchor_;
};

// Mean cosine similarity of consecutive points' identity descriptors. Two zero
// descriptors count as similarity 1. Throws InvalidInput for fewer than 2 points.
double identity_preservation_score(const EditPath& path, const OracleWorld& world, std::size_t class_id,
                                   std::size_t attribute_id);

struct Histogram {
    Vector edges;  // counts.size() + 1 ascending edges
    std::vector<std::size_t> counts;
};

struct ErrorStats {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    Histogram histogram;
};

// Equal-width bins over [min, max] of the sample (a degenerate sample gets one unit-wide bin).
ErrorStats summarize_errors(std::span<const double> errors, std::size_t bins = 20);

enum class EditMethod { model, linear };

// One magnitude-control trial: a reference pair from a train sequence, a base from
// a held-out sequence of the same attribute, edited by α = change / (t_j − t_i).
struct MagnitudeTrial {
    std::size_t ref_sequence = 0;
    std::size_t ref_i = 0, ref_j = 0;
    std::size_t base_sequence = 0;
    std::size_t base_index = 0;
    std::size_t class_id = 0;
    std::size_t attribute_id = 0;
    double target_change = 0.0;
    double alpha = 0.0;
    double base_value = 0.0;
    double recovered = 0.0;
    double error = 0.0;  // recovered − (base_value + target_change)
};

struct MagnitudeReport {
    std::vector<MagnitudeTrial> trials;
    ErrorStats stats;
};

/// Draws `trials` trials, target change trials[t] = target_changes[t % size].
///
/// The reference pair spans round(change / step) steps (at least one, in the sign
/// of the change); the base index is drawn among those whose target stays inside
/// the sequence's range. Throws InvalidInput when trials == 0, target_changes is
/// empty, or a change cannot be realized on the data.
MagnitudeReport attribute_error_stats(const ModelParams& params, const OracleWorld& world, const Dataset& dataset,
                                      std::span<const double> target_changes, std::size_t trials, Rng& rng,
                                      EditMethod method = EditMethod::model);

// Same trials, replayed with another edit method (the draws are not repeated).
MagnitudeReport replay_trials(const ModelParams& params, const OracleWorld& world, const Dataset& dataset,
                              std::span<const MagnitudeTrial> trials, EditMethod method);

// Max deviation of the path from its endpoint chord over chord length.
double path_nonlinearity(const EditPath& path);

struct PathProjection {
    std::vector<Matrix> polylines;  // one (points x k) matrix per path
    Vector explained_ratio;
};

// Joint PCA over every point of every path.
PathProjection path_pca(std::span<const EditPath> paths, std::size_t k = 2);

struct OverlapReport {
    // ‖centroid_a − centroid_b‖ over the pooled RMS distance to the own centroid.
    double normalized_centroid_distance = 0.0;
    Matrix projections_a;  // 2-D joint PCA coordinates
    Matrix projections_b;
    Vector explained_ratio;
};

// Rows are samples. Throws DimensionError on differing widths, InvalidInput on empty sets.
OverlapReport delta_distribution_report(const Matrix& set_a, const Matrix& set_b);

// Model codes of every forward pair (i < j) with j − i == steps, one row each,
// over the listed sequences.
Matrix delta_codes(const ModelParams& params, const Dataset& dataset, std::span<const std::size_t> sequences,
                   std::size_t steps);

// Raw differences a_{i+steps} − a_i of the same pairs, one row each.
Matrix latent_differences(const Dataset& dataset, std::span<const std::size_t> sequences, std::size_t steps);

// Every latent of the listed sequences, one row each.
Matrix latent_rows(const Dataset& dataset, std::span<const std::size_t> sequences);

}  // namespace dge::eval
