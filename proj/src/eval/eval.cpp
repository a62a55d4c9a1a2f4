#include "dge/eval/eval.hpp"

#include "dge/errors.hpp"
#include "dge/numkit/geometry.hpp"
#include "dge/numkit/pca.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <memory>

namespace dge::eval {

void EditPath::validate() const {
    if (points.size() < 2) throw InvalidInput("edit path needs at least 2 points");
    if (points.size() != alphas.size()) {
        throw DimensionError("edit path has " + std::to_string(points.size()) + " points and " +
                             std::to_string(alphas.size()) + " alphas");
    }
    for (std::size_t k = 1; k < alphas.size(); ++k) {
        if (!(alphas[k] > alphas[k - 1])) throw InvalidInput("edit path alphas must be strictly increasing");
    }
}

LatentVector linear_baseline_edit(const LatentVector& a_i, const LatentVector& a_j, const LatentVector& b_i,
                                  double alpha) {
    if (a_i.size() != a_j.size() || a_i.size() != b_i.size()) {
        throw DimensionError("linear_baseline_edit: latent lengths " + std::to_string(a_i.size()) + ", " +
                             std::to_string(a_j.size()) + ", " + std::to_string(b_i.size()));
    }
    LatentVector out = b_i;
    for (std::size_t d = 0; d < out.size(); ++d) out.values[d] += alpha * (a_j.values[d] - a_i.values[d]);
    return out;
}

EditPath model_edit_path(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                         const LatentVector& base, std::span<const double> alphas) {
    Rng unused(0);
    const DeltaCode delta = model::encode(params, a_i, a_j, unused, false);
    EditPath path{base, {}, Vector(alphas.begin(), alphas.end())};
    for (double a : alphas) path.points.push_back(model::decode_edit(params, base, delta, a, unused, false));
    return path;
}

EditPath linear_edit_path(const LatentVector& a_i, const LatentVector& a_j, const LatentVector& base,
                          std::span<const double> alphas) {
    EditPath path{base, {}, Vector(alphas.begin(), alphas.end())};
    for (double a : alphas) path.points.push_back(linear_baseline_edit(a_i, a_j, base, a));
    return path;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    const double nu = numkit::norm(u);
    const double nv = numkit::norm(v);
    if (u.size() != v.size()) throw DimensionError("cosine_similarity: lengths differ");
    if (nu == 0.0 || nv == 0.0) throw InvalidInput("cosine_similarity: zero vector");
    return std::clamp(numkit::dot(u, v) / (nu * nv), -1.0, 1.0);
}

IdentityProbe::IdentityProbe(const OracleWorld& world, std::size_t class_id, std::size_t attribute_id)
    : world_(&world), recoverer_(world, class_id, attribute_id), class_id_(class_id), attribute_id_(attribute_id) {
    const std::size_t dim = world.shape().flat_size();
    const Vector zeros(world.n_attributes(), 0.0);
    Vector mean(dim, 0.0);
    for (std::size_t c = 0; c < world.n_classes(); ++c) {
        numkit::axpy(1.0 / static_cast<double>(world.n_classes()), world.map(c, zeros).values, mean);
    }
    anchor_ = world.map(class_id, zeros).values;
    numkit::axpy(-1.0, mean, anchor_);
}

Vector IdentityProbe::descriptor(const LatentVector& latent) const {
    const double t = recoverer_.recover(latent);
    Vector out = latent.values;
    numkit::axpy(-1.0, world_->map_single(class_id_, attribute_id_, t).values, out);
    numkit::axpy(1.0, anchor_, out);
    return out;
}

double identity_preservation_score(const EditPath& path, const OracleWorld& world, std::size_t class_id,
                                   std::size_t attribute_id) {
    if (path.points.size() < 2) throw InvalidInput("identity_preservation_score: path needs at least 2 points");
    const IdentityProbe probe(world, class_id, attribute_id);
    std::vector<Vector> desc;
    for (const auto& p : path.points) desc.push_back(probe.descriptor(p));
    double sum = 0.0;
    for (std::size_t k = 1; k < desc.size(); ++k) {
        const bool zero_prev = numkit::norm(desc[k - 1]) == 0.0;
        const bool zero_next = numkit::norm(desc[k]) == 0.0;
        if (zero_prev && zero_next) {
            sum += 1.0;
        } else if (zero_prev || zero_next) {
            sum += 0.0;
        } else {
            sum += cosine_similarity(desc[k - 1], desc[k]);
        }
    }
    return sum / static_cast<double>(desc.size() - 1);
}

ErrorStats summarize_errors(std::span<const double> errors, std::size_t bins) {
    if (errors.empty()) throw InvalidInput("summarize_errors: no samples");
    if (bins == 0) throw InvalidInput("summarize_errors: zero bins");
    ErrorStats s;
    const double n = static_cast<double>(errors.size());
    for (double e : errors) s.mean += e;
    s.mean /= n;
    double var = 0.0;
    for (double e : errors) var += (e - s.mean) * (e - s.mean);
    s.std = std::sqrt(var / n);

    auto [lo_it, hi_it] = std::minmax_element(errors.begin(), errors.end());
    double lo = *lo_it;
    double hi = *hi_it;
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
        bins = 1;
    }
    s.histogram.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) {
        s.histogram.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    }
    s.histogram.edges.back() = hi;
    s.histogram.counts.assign(bins, 0);
    for (double e : errors) {
        auto b = static_cast<std::size_t>((e - lo) / (hi - lo) * static_cast<double>(bins));
        ++s.histogram.counts[std::min(b, bins - 1)];
    }
    return s;
}

namespace {

// Recoverers are costly to build (a dense grid of oracle evaluations), so share them.
class RecovererCache {
public:
    explicit RecovererCache(const OracleWorld& world) : world_(world) {}

    const synth::AttributeRecoverer& get(std::size_t class_id, std::size_t attribute_id) {
        auto& slot = cache_[{class_id, attribute_id}];
        if (!slot) slot = std::make_unique<synth::AttributeRecoverer>(world_, class_id, attribute_id);
        return *slot;
    }

private:
    const OracleWorld& world_;
    std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<synth::AttributeRecoverer>> cache_;
};

void check_compatible(const ModelParams& params, const OracleWorld& world, const Dataset& dataset) {
    const std::size_t dim = world.shape().flat_size();
    if (params.shape.flat_size() != dim) {
        throw DimensionError("model latent size " + std::to_string(params.shape.flat_size()) +
                             " does not match the world's " + std::to_string(dim));
    }
    for (const auto& s : dataset.sequences) {
        for (const auto& l : s.latents) {
            if (l.size() != dim) throw DimensionError("dataset latent size does not match the world");
        }
    }
}

void run_trial(const ModelParams& params, const Dataset& dataset, MagnitudeTrial& t, EditMethod method,
               RecovererCache& recoverers) {
    const auto& ref = dataset.sequences[t.ref_sequence];
    const auto& base = dataset.sequences[t.base_sequence];
    LatentVector edited;
    if (method == EditMethod::model) {
        Rng unused(0);
        const DeltaCode delta = model::encode(params, ref.latents[t.ref_i], ref.latents[t.ref_j], unused, false);
        edited = model::decode_edit(params, base.latents[t.base_index], delta, t.alpha, unused, false);
    } else {
        edited = linear_baseline_edit(ref.latents[t.ref_i], ref.latents[t.ref_j], base.latents[t.base_index], t.alpha);
    }
    t.recovered = recoverers.get(t.class_id, t.attribute_id).recover(edited);
    t.error = t.recovered - (t.base_value + t.target_change);
}

MagnitudeReport finish(std::vector<MagnitudeTrial> trials) {
    Vector errors;
    errors.reserve(trials.size());
    for (const auto& t : trials) errors.push_back(t.error);
    MagnitudeReport r;
    r.stats = summarize_errors(errors);
    r.trials = std::move(trials);
    return r;
}

}  // namespace

MagnitudeReport attribute_error_stats(const ModelParams& params, const OracleWorld& world, const Dataset& dataset,
                                      std::span<const double> target_changes, std::size_t trials, Rng& rng,
                                      EditMethod method) {
    if (trials == 0) throw InvalidInput("attribute_error_stats: zero trials");
    if (target_changes.empty()) throw InvalidInput("attribute_error_stats: no target changes");
    check_compatible(params, world, dataset);
    RecovererCache recoverers(world);
    const auto heldout = dataset.sequences_in(synth::Split::heldout);
    if (heldout.empty()) throw InvalidInput("attribute_error_stats: dataset has no held-out sequences");

    std::vector<MagnitudeTrial> out;
    out.reserve(trials);
    for (std::size_t n = 0; n < trials; ++n) {
        MagnitudeTrial t;
        t.target_change = target_changes[n % target_changes.size()];
        t.base_sequence = heldout[rng.uniform_index(heldout.size())];
        const auto& base = dataset.sequences[t.base_sequence];
        t.class_id = base.class_id;
        t.attribute_id = base.attribute_id;

        const auto refs = dataset.sequences_in(synth::Split::train, t.attribute_id);
        t.ref_sequence = refs[rng.uniform_index(refs.size())];
        const auto& ref = dataset.sequences[t.ref_sequence];
        const long n_ref = static_cast<long>(ref.size());
        long steps = std::lround(t.target_change / ref.step());
        if (steps == 0) steps = t.target_change < 0.0 ? -1 : 1;
        if (std::abs(steps) >= n_ref) {
            throw InvalidInput("attribute_error_stats: change " + std::to_string(t.target_change) +
                               " exceeds the reference sequence");
        }
        const long first = std::max(0L, -steps);
        const long count = n_ref - std::abs(steps);
        t.ref_i = static_cast<std::size_t>(first + static_cast<long>(rng.uniform_index(count)));
        t.ref_j = static_cast<std::size_t>(static_cast<long>(t.ref_i) + steps);
        t.alpha = t.target_change / (ref.attribute_values[t.ref_j] - ref.attribute_values[t.ref_i]);

        std::vector<std::size_t> bases;
        const double lo = base.attribute_values.front();
        const double hi = base.attribute_values.back();
        const double slack = 1e-9 * (hi - lo);
        for (std::size_t k = 0; k < base.size(); ++k) {
            const double target = base.attribute_values[k] + t.target_change;
            if (target >= lo - slack && target <= hi + slack) bases.push_back(k);
        }
        if (bases.empty()) {
            throw InvalidInput("attribute_error_stats: change " + std::to_string(t.target_change) +
                               " leaves the attribute range from every base");
        }
        t.base_index = bases[rng.uniform_index(bases.size())];
        t.base_value = base.attribute_values[t.base_index];
        run_trial(params, dataset, t, method, recoverers);
        out.push_back(t);
    }
    return finish(std::move(out));
}

MagnitudeReport replay_trials(const ModelParams& params, const OracleWorld& world, const Dataset& dataset,
                              std::span<const MagnitudeTrial> trials, EditMethod method) {
    if (trials.empty()) throw InvalidInput("replay_trials: zero trials");
    check_compatible(params, world, dataset);
    RecovererCache recoverers(world);
    std::vector<MagnitudeTrial> out(trials.begin(), trials.end());
    for (auto& t : out) run_trial(params, dataset, t, method, recoverers);
    return finish(std::move(out));
}

double path_nonlinearity(const EditPath& path) {
    std::vector<Vector> pts;
    pts.reserve(path.points.size());
    for (const auto& p : path.points) pts.push_back(p.values);
    return numkit::chord_deviation_ratio(pts);
}

PathProjection path_pca(std::span<const EditPath> paths, std::size_t k) {
    std::size_t total = 0;
    std::size_t dim = 0;
    for (const auto& p : paths) {
        total += p.points.size();
        for (const auto& pt : p.points) {
            if (dim == 0) dim = pt.size();
            if (pt.size() != dim) throw DimensionError("path_pca: points of different length");
        }
    }
    if (total < 2) throw InvalidInput("path_pca: need at least 2 points in total");
    Matrix data(total, dim);
    std::size_t r = 0;
    for (const auto& p : paths) {
        for (const auto& pt : p.points) std::copy(pt.values.begin(), pt.values.end(), data.row(r++).begin());
    }
    const auto res = numkit::pca(data, k);
    PathProjection out;
    out.explained_ratio = res.explained_ratio;
    r = 0;
    for (const auto& p : paths) {
        Matrix m(p.points.size(), k);
        for (std::size_t i = 0; i < p.points.size(); ++i, ++r) {
            std::copy(res.projections.row(r).begin(), res.projections.row(r).end(), m.row(i).begin());
        }
        out.polylines.push_back(std::move(m));
    }
    return out;
}

namespace {

Vector centroid(const Matrix& m) {
    Vector c(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) numkit::axpy(1.0, m.row(r), c);
    for (double& v : c) v /= static_cast<double>(m.rows());
    return c;
}

double spread(const Matrix& m, const Vector& c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t d = 0; d < m.cols(); ++d) s += (m(r, d) - c[d]) * (m(r, d) - c[d]);
    }
    return s;
}

}  // namespace

OverlapReport delta_distribution_report(const Matrix& set_a, const Matrix& set_b) {
    if (set_a.rows() == 0 || set_b.rows() == 0) throw InvalidInput("delta_distribution_report: empty set");
    if (set_a.cols() != set_b.cols()) {
        throw DimensionError("delta_distribution_report: widths " + std::to_string(set_a.cols()) + " and " +
                             std::to_string(set_b.cols()));
    }
    const Vector ca = centroid(set_a);
    const Vector cb = centroid(set_b);
    Vector diff = ca;
    numkit::axpy(-1.0, cb, diff);
    const double dist = numkit::norm(diff);
    const double pooled =
        std::sqrt((spread(set_a, ca) + spread(set_b, cb)) / static_cast<double>(set_a.rows() + set_b.rows()));

    OverlapReport out;
    if (dist == 0.0) {
        out.normalized_centroid_distance = 0.0;
    } else {
        out.normalized_centroid_distance = pooled > 0.0 ? dist / pooled : std::numeric_limits<double>::infinity();
    }

    Matrix joint(set_a.rows() + set_b.rows(), set_a.cols());
    std::copy(set_a.span().begin(), set_a.span().end(), joint.span().begin());
    std::copy(set_b.span().begin(), set_b.span().end(), joint.span().begin() + static_cast<long>(set_a.size()));
    const std::size_t k = std::min<std::size_t>(2, set_a.cols());
    if (joint.rows() >= 2) {
        const auto res = numkit::pca(joint, k);
        out.explained_ratio = res.explained_ratio;
        out.projections_a = Matrix(set_a.rows(), k);
        out.projections_b = Matrix(set_b.rows(), k);
        for (std::size_t r = 0; r < joint.rows(); ++r) {
            auto dst = r < set_a.rows() ? out.projections_a.row(r) : out.projections_b.row(r - set_a.rows());
            std::copy(res.projections.row(r).begin(), res.projections.row(r).end(), dst.begin());
        }
    }
    return out;
}

Matrix delta_codes(const ModelParams& params, const Dataset& dataset, std::span<const std::size_t> sequences,
                   std::size_t steps) {
    if (steps == 0) throw InvalidInput("delta_codes: zero steps");
    std::vector<Vector> rows;
    Rng unused(0);
    for (std::size_t s : sequences) {
        const auto& seq = dataset.sequences.at(s);
        for (std::size_t i = 0; i + steps < seq.size(); ++i) {
            rows.push_back(model::encode(params, seq.latents[i], seq.latents[i + steps], unused, false).values);
        }
    }
    if (rows.empty()) throw InvalidInput("delta_codes: no pair spans " + std::to_string(steps) + " steps");
    return Matrix::from_rows(rows);
}

Matrix latent_differences(const Dataset& dataset, std::span<const std::size_t> sequences, std::size_t steps) {
    if (steps == 0) throw InvalidInput("latent_differences: zero steps");
    std::vector<Vector> rows;
    for (std::size_t s : sequences) {
        const auto& seq = dataset.sequences.at(s);
        for (std::size_t i = 0; i + steps < seq.size(); ++i) {
            Vector v = seq.latents[i + steps].values;
            numkit::axpy(-1.0, seq.latents[i].values, v);
            rows.push_back(std::move(v));
        }
    }
    if (rows.empty()) throw InvalidInput("latent_differences: no pair spans " + std::to_string(steps) + " steps");
    return Matrix::from_rows(rows);
}

Matrix latent_rows(const Dataset& dataset, std::span<const std::size_t> sequences) {
    std::vector<Vector> rows;
    for (std::size_t s : sequences) {
        for (const auto& l : dataset.sequences.at(s).latents) rows.push_back(l.values);
    }
    if (rows.empty()) throw InvalidInput("latent_rows: no latents");
    return Matrix::from_rows(rows);
}

}  // namespace dge::eval
