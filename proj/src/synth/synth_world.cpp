#include "dge/synth/synth_world.hpp"

#include "dge/errors.hpp"
#include "dge/numkit/geometry.hpp"
#include "dge/numkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dge::synth {

using numkit::Rng;

namespace {

// Spread of the class offsets relative to the attribute sweep.
constexpr double kClassOffsetGain = 0.6;
// Input gains of the nonlinear branch: the attribute sweep crosses the tanh
// knee, class embeddings only tilt it.
constexpr double kAttributeNonlinGain = 2.0;
constexpr double kClassNonlinGain = 0.5;
constexpr std::size_t kMaxDraws = 64;

void fill_normal(std::span<double> v, Rng& rng, double stddev) {
    for (double& x : v) x = stddev * rng.normal();
}

}  // namespace

void WorldConfig::validate() const {
    shape.validate();
    if (n_classes == 0 || n_attributes == 0) throw InvalidInput("oracle: class and attribute counts must be positive");
    if (!(curvature >= 0.0) || !std::isfinite(curvature)) throw InvalidInput("oracle: curvature must be >= 0");
    if (!(range_lo < range_hi) || !std::isfinite(range_lo) || !std::isfinite(range_hi)) {
        throw InvalidInput("oracle: attribute range must satisfy lo < hi");
    }
}

OracleWorld::OracleWorld(const WorldConfig& config) : config_(config) {
    config_.validate();
    attribute_scale_ = std::max(std::abs(config_.range_lo), std::abs(config_.range_hi));
    for (draws_ = 1; draws_ <= kMaxDraws; ++draws_) {
        draw(numkit::mix64(config_.seed + draws_ - 1));
        if (acceptable()) return;
    }
    throw InvalidInput("oracle: no acceptable map found for seed " + std::to_string(config_.seed));
}

void OracleWorld::draw(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t in = kEmbeddingDim + config_.n_attributes;
    const std::size_t f = config_.shape.flat_size();

    embeddings_ = Matrix(config_.n_classes, kEmbeddingDim);
    for (std::size_t c = 0; c < config_.n_classes; ++c) {
        auto row = embeddings_.row(c);
        do {
            fill_normal(row, rng, 1.0);
        } while (numkit::norm(row) < 1e-3);
        const double n = numkit::norm(row);
        for (double& x : row) x /= n;
    }

    offset_.assign(f, 0.0);
    fill_normal(offset_, rng, 0.5);

    affine_ = Matrix(in, f);
    for (std::size_t r = 0; r < in; ++r) {
        fill_normal(affine_.row(r), rng, r < kEmbeddingDim ? kClassOffsetGain : 1.0);
    }

    w1_ = Matrix(in, kHidden);
    for (std::size_t r = 0; r < in; ++r) {
        fill_normal(w1_.row(r), rng, r < kEmbeddingDim ? kClassNonlinGain : kAttributeNonlinGain);
    }
    b1_.assign(kHidden, 0.0);
    fill_normal(b1_, rng, 0.5);
    w2_ = Matrix(kHidden, kHidden);
    fill_normal(w2_.span(), rng, 1.5 / std::sqrt(static_cast<double>(kHidden)));
    b2_.assign(kHidden, 0.0);
    fill_normal(b2_, rng, 0.3);
    w3_ = Matrix(kHidden, f);
    fill_normal(w3_.span(), rng, 1.0 / std::sqrt(static_cast<double>(kHidden)));
}

bool OracleWorld::acceptable() const {
    const Vector t = linspace(config_.range_lo, config_.range_hi, kProbePoints);
    std::vector<Vector> all;
    for (std::size_t c = 0; c < config_.n_classes; ++c) {
        for (std::size_t a = 0; a < config_.n_attributes; ++a) {
            std::vector<Vector> path;
            for (double v : t) path.push_back(map_single(c, a, v).values);
            if (config_.curvature > 0.0 && numkit::chord_deviation_ratio(path) <= 0.01) return false;
            all.insert(all.end(), path.begin(), path.end());
        }
    }
    // Points where two attribute axes cross (both at zero) coincide by construction;
    // distinctness is required between distinct (class, attribute values).
    for (std::size_t p = 0; p < all.size(); ++p) {
        for (std::size_t q = p + 1; q < all.size(); ++q) {
            const std::size_t cp = p / (config_.n_attributes * kProbePoints);
            const std::size_t cq = q / (config_.n_attributes * kProbePoints);
            const std::size_t tp = p % kProbePoints;
            const std::size_t tq = q % kProbePoints;
            const bool same_point = cp == cq && t[tp] == 0.0 && t[tq] == 0.0;
            if (same_point) continue;
            double d2 = 0.0;
            for (std::size_t i = 0; i < all[p].size(); ++i) d2 += (all[p][i] - all[q][i]) * (all[p][i] - all[q][i]);
            if (std::sqrt(d2) <= 1e-6) return false;
        }
    }
    return true;
}

void OracleWorld::check_class(std::size_t class_id) const {
    if (class_id >= config_.n_classes) {
        throw InvalidInput("oracle: unknown class id " + std::to_string(class_id) + " (world has " +
                           std::to_string(config_.n_classes) + ")");
    }
}

LatentVector OracleWorld::map(std::size_t class_id, std::span<const double> attributes) const {
    check_class(class_id);
    if (attributes.size() != config_.n_attributes) {
        throw DimensionError("oracle: expected " + std::to_string(config_.n_attributes) + " attribute values, got " +
                             std::to_string(attributes.size()));
    }
    const std::size_t in = kEmbeddingDim + config_.n_attributes;
    Vector z(in);
    const auto emb = embeddings_.row(class_id);
    std::copy(emb.begin(), emb.end(), z.begin());
    for (std::size_t a = 0; a < attributes.size(); ++a) z[kEmbeddingDim + a] = attributes[a] / attribute_scale_;

    LatentVector out{offset_};
    for (std::size_t r = 0; r < in; ++r) numkit::axpy(z[r], affine_.row(r), out.values);
    if (config_.curvature == 0.0) return out;

    Vector h1 = b1_;
    for (std::size_t r = 0; r < in; ++r) numkit::axpy(z[r], w1_.row(r), h1);
    for (double& x : h1) x = std::tanh(x);
    Vector h2 = b2_;
    for (std::size_t r = 0; r < kHidden; ++r) numkit::axpy(h1[r], w2_.row(r), h2);
    for (std::size_t r = 0; r < kHidden; ++r) numkit::axpy(config_.curvature * std::tanh(h2[r]), w3_.row(r), out.values);
    return out;
}

LatentVector OracleWorld::map_single(std::size_t class_id, std::size_t attribute_id, double t) const {
    if (attribute_id >= config_.n_attributes) {
        throw InvalidInput("oracle: unknown attribute id " + std::to_string(attribute_id));
    }
    Vector attrs(config_.n_attributes, 0.0);
    attrs[attribute_id] = t;
    return map(class_id, attrs);
}

OracleWorld build_oracle(std::uint64_t seed, const LatentShape& shape, std::size_t n_classes,
                         std::size_t n_attributes, double curvature) {
    WorldConfig cfg;
    cfg.seed = seed;
    cfg.shape = shape;
    cfg.n_classes = n_classes;
    cfg.n_attributes = n_attributes;
    cfg.curvature = curvature;
    return OracleWorld(cfg);
}

Vector linspace(double lo, double hi, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {lo};
    Vector v(n);
    for (std::size_t k = 0; k < n; ++k) {
        v[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    }
    v.back() = hi;
    return v;
}

std::vector<AttributeSequence> generate_sequences(const OracleWorld& world, std::span<const std::size_t> class_ids,
                                                  std::size_t attribute_id, std::span<const double> t_values) {
    if (attribute_id >= world.n_attributes()) {
        throw InvalidInput("generate_sequences: unknown attribute id " + std::to_string(attribute_id));
    }
    if (t_values.size() < 3) {
        throw InvalidInput("generate_sequences: a sequence needs at least 3 points, got " +
                           std::to_string(t_values.size()));
    }
    for (std::size_t k = 1; k < t_values.size(); ++k) {
        if (!(t_values[k] > t_values[k - 1])) {
            throw InvalidInput("generate_sequences: attribute values must be strictly increasing");
        }
    }
    std::vector<AttributeSequence> out;
    for (std::size_t c : class_ids) {
        if (c >= world.n_classes()) throw InvalidInput("generate_sequences: unknown class id " + std::to_string(c));
        AttributeSequence s;
        s.class_id = c;
        s.attribute_id = attribute_id;
        s.attribute_values.assign(t_values.begin(), t_values.end());
        for (double t : t_values) s.latents.push_back(world.map_single(c, attribute_id, t));
        out.push_back(std::move(s));
    }
    return out;
}

Split Dataset::split_of(std::size_t class_id) const {
    if (std::find(train_classes.begin(), train_classes.end(), class_id) != train_classes.end()) return Split::train;
    if (std::find(heldout_classes.begin(), heldout_classes.end(), class_id) != heldout_classes.end()) {
        return Split::heldout;
    }
    throw InvalidInput("dataset: class " + std::to_string(class_id) + " has no split");
}

std::vector<std::size_t> Dataset::sequences_in(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        if (split_of(sequences[s].class_id) == split) out.push_back(s);
    }
    return out;
}

std::vector<std::size_t> Dataset::sequences_in(Split split, std::size_t attribute_id) const {
    std::vector<std::size_t> out;
    for (std::size_t s : sequences_in(split)) {
        if (sequences[s].attribute_id == attribute_id) out.push_back(s);
    }
    return out;
}

void Dataset::validate() const {
    if (train_classes.empty() || heldout_classes.empty()) {
        throw InvalidInput("dataset: need at least one train and one held-out class");
    }
    for (std::size_t c : train_classes) {
        if (std::find(heldout_classes.begin(), heldout_classes.end(), c) != heldout_classes.end()) {
            throw InvalidInput("dataset: class " + std::to_string(c) + " is in both splits");
        }
    }
    std::vector<std::size_t> attributes;
    for (const auto& s : sequences) {
        split_of(s.class_id);
        if (s.size() < 3) throw InvalidInput("dataset: sequence shorter than 3");
        if (s.attribute_values.size() != s.latents.size()) {
            throw InvalidInput("dataset: attribute values and latents differ in length");
        }
        if (std::find(attributes.begin(), attributes.end(), s.attribute_id) == attributes.end()) {
            attributes.push_back(s.attribute_id);
        }
    }
    for (std::size_t a : attributes) {
        if (sequences_in(Split::train, a).empty() || sequences_in(Split::heldout, a).empty()) {
            throw InvalidInput("dataset: attribute " + std::to_string(a) + " lacks a train or held-out sequence");
        }
    }
}

Dataset build_dataset(const OracleWorld& world, std::span<const std::size_t> train_classes,
                      std::span<const std::size_t> heldout_classes, std::span<const double> t_values) {
    Dataset ds;
    ds.world_config = world.config();
    ds.train_classes.assign(train_classes.begin(), train_classes.end());
    ds.heldout_classes.assign(heldout_classes.begin(), heldout_classes.end());
    std::vector<std::size_t> all(train_classes.begin(), train_classes.end());
    all.insert(all.end(), heldout_classes.begin(), heldout_classes.end());
    std::sort(all.begin(), all.end());
    for (std::size_t a = 0; a < world.n_attributes(); ++a) {
        auto seqs = generate_sequences(world, all, a, t_values);
        for (auto& s : seqs) ds.sequences.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

AttributeRecoverer::AttributeRecoverer(const OracleWorld& world, std::size_t class_id, std::size_t attribute_id)
    : world_(&world), class_id_(class_id), attribute_id_(attribute_id) {
    const auto& cfg = world.config();
    const auto n = static_cast<std::size_t>(std::ceil((cfg.range_hi - cfg.range_lo) / 0.1)) + 1;
    grid_t_ = linspace(cfg.range_lo, cfg.range_hi, n);
    grid_latents_.reserve(n);
    for (double t : grid_t_) grid_latents_.push_back(world.map_single(class_id, attribute_id, t));
}

double AttributeRecoverer::recover(const LatentVector& latent) const {
    if (latent.size() != world_->shape().flat_size()) {
        throw DimensionError("recover_attribute: latent has length " + std::to_string(latent.size()));
    }
    auto dist2 = [&](const LatentVector& p) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += (p.values[i] - latent.values[i]) * (p.values[i] - latent.values[i]);
        return s;
    };
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid_latents_.size(); ++k) {
        const double d = dist2(grid_latents_[k]);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    double lo = grid_t_[best == 0 ? 0 : best - 1];
    double hi = grid_t_[std::min(best + 1, grid_t_.size() - 1)];
    auto at = [&](double t) { return dist2(world_->map_single(class_id_, attribute_id_, t)); };
    while (hi - lo > 1e-5) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (at(m1) <= at(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    const auto& cfg = world_->config();
    return std::clamp(0.5 * (lo + hi), cfg.range_lo, cfg.range_hi);
}

double recover_attribute(const OracleWorld& world, const LatentVector& latent, std::size_t class_id,
                         std::size_t attribute_id) {
    return AttributeRecoverer(world, class_id, attribute_id).recover(latent);
}

}  // namespace dge::synth
