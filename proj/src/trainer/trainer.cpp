#include "dge/trainer/trainer.hpp"

#include "dge/errors.hpp"
#include "dge/trainer/checkpoint.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dge::trainer {

using model::ModelGradients;
using synth::Split;

void TrainConfig::validate() const {
    if (epochs == 0) throw InvalidInput("train config: epochs must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidInput("train config: lr must be positive");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw InvalidInput("train config: weight_decay must be >= 0");
    }
    if (model.d_delta == 0 || model.decoder_hidden == 0) {
        throw InvalidInput("train config: d_delta and decoder_hidden must be positive");
    }
    if (!(model.leaky_slope > 0.0 && model.leaky_slope < 1.0)) {
        throw InvalidInput("train config: leaky_slope must lie in (0,1)");
    }
    if (!(model.dropout_p >= 0.0 && model.dropout_p < 1.0)) {
        throw InvalidInput("train config: dropout must lie in [0,1)");
    }
    if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma)) throw InvalidInput("train config: sigma must be >= 0");
    if (!(convergence_threshold >= 0.0)) throw InvalidInput("train config: convergence_threshold must be >= 0");
    loss.validate();
}

BatchOptions batch_options(const TrainConfig& config) {
    return {config.noise, config.linearity_alphas, config.linearity_samples, config.role_swap};
}

Vector dimension_std(const Dataset& dataset) {
    const auto train = dataset.sequences_in(Split::train);
    if (train.empty()) throw InvalidInput("dimension_std: no train sequences");
    const std::size_t f = dataset.sequences[train.front()].latents.front().size();
    Vector mean(f, 0.0), sq(f, 0.0);
    double n = 0.0;
    for (std::size_t s : train) {
        for (const auto& l : dataset.sequences[s].latents) {
            for (std::size_t d = 0; d < f; ++d) mean[d] += l.values[d];
            n += 1.0;
        }
    }
    for (double& m : mean) m /= n;
    for (std::size_t s : train) {
        for (const auto& l : dataset.sequences[s].latents) {
            for (std::size_t d = 0; d < f; ++d) sq[d] += (l.values[d] - mean[d]) * (l.values[d] - mean[d]);
        }
    }
    Vector out(f);
    for (std::size_t d = 0; d < f; ++d) out[d] = std::sqrt(sq[d] / std::max(1.0, n - 1.0));
    return out;
}

namespace {

Vector draw_noise(Rng& rng, double sigma, const Vector& scale) {
    Vector n(scale.size());
    for (std::size_t d = 0; d < n.size(); ++d) n[d] = sigma * scale[d] * rng.normal();
    return n;
}

LatentVector plus(const LatentVector& v, const Vector& noise) {
    LatentVector out = v;
    if (!noise.empty()) numkit::axpy(1.0, noise, out.values);
    return out;
}

// Train sequences for `attribute`, ordered by class id.
std::vector<std::size_t> train_sequences_for(const Dataset& ds, std::size_t attribute) {
    auto seqs = ds.sequences_in(Split::train, attribute);
    std::sort(seqs.begin(), seqs.end(), [&](std::size_t a, std::size_t b) {
        return ds.sequences[a].class_id < ds.sequences[b].class_id;
    });
    return seqs;
}

}  // namespace

TrainingBatch make_batch_for(const Dataset& ds, std::size_t seq_a, std::size_t i, std::size_t j, Rng& rng,
                             const BatchOptions& options, const Vector& noise_scale) {
    const auto& sa = ds.sequences.at(seq_a);
    if (i == j || i >= sa.size() || j >= sa.size()) {
        throw InvalidInput("make_batch: invalid pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    std::vector<std::size_t> others;
    for (std::size_t s : train_sequences_for(ds, sa.attribute_id)) {
        if (ds.sequences[s].class_id != sa.class_id && ds.sequences[s].size() == sa.size()) others.push_back(s);
    }
    if (others.empty()) {
        throw InvalidInput("make_batch: attribute " + std::to_string(sa.attribute_id) +
                           " needs at least two train classes");
    }
    TrainingBatch b;
    b.seq_a = seq_a;
    b.seq_b = options.role_swap ? others[rng.uniform_index(others.size())] : others.front();
    const auto& sb = ds.sequences[b.seq_b];
    b.class_a = sa.class_id;
    b.class_b = sb.class_id;
    b.attribute = sa.attribute_id;
    b.i = i;
    b.j = j;

    const double sigma = options.noise.sigma;
    const bool noisy = sigma > 0.0;
    const bool shared = options.noise.shared_per_class;
    auto noise = [&] { return noisy ? draw_noise(rng, sigma, noise_scale) : Vector{}; };
    const Vector n_a = shared ? noise() : Vector{};
    const Vector n_b = shared ? noise() : Vector{};
    auto with_a = [&](const LatentVector& v) { return plus(v, shared ? n_a : noise()); };
    auto with_b = [&](const LatentVector& v) { return plus(v, shared ? n_b : noise()); };

    b.sample.a_i = with_a(sa.latents[i]);
    b.sample.a_j = with_a(sa.latents[j]);
    b.sample.b_i = with_b(sb.latents[i]);
    b.sample.b_j = with_b(sb.latents[j]);

    auto terms = model::linearity_terms(sa.size(), i, j, options.linearity_alphas);
    if (options.linearity_samples != 0 && terms.size() > options.linearity_samples) {
        for (std::size_t t = 0; t < options.linearity_samples; ++t) {
            std::swap(terms[t], terms[t + rng.uniform_index(terms.size() - t)]);
        }
        terms.resize(options.linearity_samples);
    }
    for (const auto& t : terms) {
        b.linearity.push_back({with_a(sa.latents[t.base_index]), static_cast<double>(t.alpha),
                               with_a(sa.latents[t.target_index])});
        b.linearity_info.push_back({t.base_index, t.alpha, t.target_index});
    }

    // Unit steps of class A for every attribute it has a train sequence for.
    for (std::size_t s : ds.sequences_in(Split::train)) {
        const auto& seq = ds.sequences[s];
        if (seq.class_id != sa.class_id) continue;
        const std::size_t k = rng.uniform_index(seq.size() - 1);
        b.unit_steps.emplace_back(with_a(seq.latents[k]), with_a(seq.latents[k + 1]));
    }
    return b;
}

TrainingBatch make_batch(const Dataset& ds, Rng& rng, const BatchOptions& options, const Vector& noise_scale) {
    auto train = ds.sequences_in(Split::train);
    if (train.empty()) throw InvalidInput("make_batch: no train sequences");
    std::size_t seq_a = train[rng.uniform_index(train.size())];
    if (!options.role_swap) seq_a = train_sequences_for(ds, ds.sequences[seq_a].attribute_id).front();
    const std::size_t n = ds.sequences[seq_a].size();
    std::size_t i = rng.uniform_index(n);
    std::size_t j = rng.uniform_index(n - 1);
    if (j >= i) ++j;
    if (!options.role_swap && i > j) std::swap(i, j);
    return make_batch_for(ds, seq_a, i, j, rng, options, noise_scale);
}

CompositeLoss composite_loss(const ModelParams& params, const TrainingBatch& batch, const TrainConfig& config,
                             Rng& rng, bool training) {
    const auto& w = config.loss;
    CompositeLoss out{{}, ModelGradients::zeros(params)};

    const auto res = model::accumulate_residual_loss(params, batch.sample, w, rng, training, 1.0, out.grads);
    out.components.identity = res.identity;
    out.components.transfer = res.transfer;
    out.components.total = w.lambda1 * res.identity + w.lambda2 * res.transfer;

    if (w.lambda_antisym > 0.0) {
        out.components.antisym = model::accumulate_antisymmetry_loss(params, batch.sample.a_i, batch.sample.a_j, rng,
                                                                     training, w.lambda_antisym, out.grads);
        if (config.antisym_self_pair) {
            out.components.antisym += model::accumulate_antisymmetry_loss(
                params, batch.sample.a_i, batch.sample.a_i, rng, training, w.lambda_antisym, out.grads);
        }
        out.components.total += w.lambda_antisym * out.components.antisym;
    }

    if (w.lambda_linear > 0.0 && !batch.linearity.empty()) {
        out.components.linear = model::accumulate_linearity_loss(params, batch.sample.a_i, batch.sample.a_j,
                                                                 batch.linearity, rng, training, w.lambda_linear,
                                                                 out.grads);
        out.components.total += w.lambda_linear * out.components.linear;
    }

    if (w.lambda_orthonorm > 0.0 && !batch.unit_steps.empty()) {
        std::vector<const LatentVector*> firsts, seconds;
        for (const auto& [lo, hi] : batch.unit_steps) {
            firsts.push_back(&lo);
            seconds.push_back(&hi);
        }
        auto enc = model::encode_rows(params, firsts, seconds, rng, training);
        std::vector<std::vector<model::DeltaCode>> groups;
        for (std::size_t r = 0; r < enc.codes.rows(); ++r) {
            groups.push_back({model::DeltaCode{Vector(enc.codes.row(r).begin(), enc.codes.row(r).end())}});
        }
        auto ortho = model::orthonorm_loss(groups);
        numkit::Matrix g(enc.codes.rows(), enc.codes.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = w.lambda_orthonorm * ortho.grads[r][0][c];
        }
        model::encoder_backward(params, enc, g, out.grads);
        out.components.orthonorm = ortho.value;
        out.components.total += w.lambda_orthonorm * ortho.value;
    }
    return out;
}

TrainState init_train_state(const Dataset& ds, const TrainConfig& config) {
    config.validate();
    model::LatentShape shape = ds.world_config.shape;
    shape.d_delta = config.model.d_delta;
    TrainState st{model::init_model(shape, config.model.decoder_hidden, numkit::mix64(config.seed ^ 0x1ULL),
                                    config.model.leaky_slope, config.model.dropout_p),
                  {},
                  Rng(numkit::mix64(config.seed ^ 0x2ULL)),
                  {},
                  false};
    st.optimizer = numkit::make_adam(st.params.parameter_count(), config.lr, config.weight_decay);
    st.optimizer.decoupled_weight_decay = config.decoupled_weight_decay;
    return st;
}

namespace {

void require_finite(double v, const char* component, std::size_t epoch) {
    if (!std::isfinite(v)) {
        throw TrainingError(std::string("non-finite ") + component + " loss at epoch " + std::to_string(epoch));
    }
}

}  // namespace

EpochRecord train_epoch(TrainState& st, const Dataset& ds, const TrainConfig& config) {
    const auto opts = batch_options(config);
    const Vector scale = dimension_std(ds);
    const std::size_t epoch = st.history.records.size();

    struct Pair {
        std::size_t seq, i, j;
    };
    std::vector<Pair> pairs;
    std::vector<std::size_t> seqs;
    if (config.role_swap) {
        seqs = ds.sequences_in(Split::train);
    } else {
        for (std::size_t a = 0; a < ds.world_config.n_attributes; ++a) {
            auto s = train_sequences_for(ds, a);
            if (!s.empty()) seqs.push_back(s.front());
        }
    }
    for (std::size_t s : seqs) {
        const std::size_t n = ds.sequences[s].size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j || (!config.role_swap && i > j)) continue;
                pairs.push_back({s, i, j});
            }
        }
    }
    for (std::size_t k = pairs.size(); k > 1; --k) std::swap(pairs[k - 1], pairs[st.rng.uniform_index(k)]);

    EpochRecord sum;
    for (const auto& p : pairs) {
        const auto batch = make_batch_for(ds, p.seq, p.i, p.j, st.rng, opts, scale);
        auto loss = composite_loss(st.params, batch, config, st.rng, true);
        const auto& c = loss.components;
        require_finite(c.identity, "identity", epoch);
        require_finite(c.transfer, "transfer", epoch);
        require_finite(c.antisym, "antisymmetry", epoch);
        require_finite(c.linear, "linearity", epoch);
        require_finite(c.orthonorm, "orthonormality", epoch);
        if (!loss.grads.all_finite()) {
            throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch));
        }
        numkit::adam_step(st.params.blocks(), loss.grads.blocks(), st.optimizer);
        sum.total += c.total;
        sum.identity += c.identity;
        sum.transfer += c.transfer;
        sum.antisym += c.antisym;
        sum.linear += c.linear;
        sum.orthonorm += c.orthonorm;
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, pairs.size()));
    EpochRecord mean{sum.total / n,  sum.identity / n, sum.transfer / n,
                     sum.antisym / n, sum.linear / n,   sum.orthonorm / n};
    if (!st.params.all_finite()) throw TrainingError("non-finite parameters after epoch " + std::to_string(epoch));
    st.history.records.push_back(mean);
    return mean;
}

namespace {

bool plateaued(const TrainHistory& h, std::size_t window, double threshold) {
    if (window == 0 || threshold <= 0.0 || h.records.size() < 2 * window) return false;
    const std::size_t n = h.records.size();
    double prev = 0.0, cur = 0.0;
    for (std::size_t k = n - 2 * window; k < n - window; ++k) prev += h.records[k].total;
    for (std::size_t k = n - window; k < n; ++k) cur += h.records[k].total;
    if (!(prev > 0.0)) return true;
    return (prev - cur) / prev < threshold;
}

}  // namespace

TrainState train(const Dataset& ds, const TrainConfig& config, std::optional<TrainState> resume,
                 const EpochCallback& on_epoch) {
    config.validate();
    ds.validate();
    TrainState st = resume ? std::move(*resume) : init_train_state(ds, config);
    while (st.history.records.size() < config.epochs && !st.converged) {
        const auto rec = train_epoch(st, ds, config);
        const std::size_t done = st.history.records.size();
        spdlog::debug("epoch {} total {:.6g} identity {:.6g} transfer {:.6g}", done, rec.total, rec.identity,
                      rec.transfer);
        if (on_epoch) on_epoch(st);
        st.converged = plateaued(st.history, config.convergence_window, config.convergence_threshold);
        if (!config.checkpoint_path.empty() && config.checkpoint_interval != 0 &&
            done % config.checkpoint_interval == 0 && done < config.epochs && !st.converged) {
            save_checkpoint(st, config, config.checkpoint_path);
        }
    }
    if (st.converged) spdlog::info("loss plateaued after {} epochs", st.history.records.size());
    if (!config.checkpoint_path.empty()) save_checkpoint(st, config, config.checkpoint_path);
    return st;
}

}  // namespace dge::trainer
