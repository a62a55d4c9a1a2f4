#include "dge/model/delta_model.hpp"

#include "dge/errors.hpp"

#include <cmath>
#include <string>

namespace dge::model {

using numkit::axpy;

void LatentShape::validate() const {
    if (style_rows == 0 || style_dim == 0 || d_delta == 0) {
        throw InvalidInput("LatentShape: all dimensions must be positive (got " + std::to_string(style_rows) +
                           "x" + std::to_string(style_dim) + ", d_delta " + std::to_string(d_delta) + ")");
    }
}

std::vector<std::span<double>> ModelParams::blocks() {
    auto out = encoder.blocks();
    auto dec = decoder.blocks();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

std::vector<std::span<const double>> ModelParams::blocks() const {
    auto out = encoder.blocks();
    auto dec = decoder.blocks();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

ModelGradients ModelGradients::zeros(const ModelParams& params) {
    return {MlpParams::zeros(params.encoder_spec), MlpParams::zeros(params.decoder_spec)};
}

std::vector<std::span<const double>> ModelGradients::blocks() const {
    auto out = encoder.blocks();
    auto dec = decoder.blocks();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

Vector ModelGradients::flatten() const {
    Vector flat;
    flat.reserve(encoder.parameter_count() + decoder.parameter_count());
    for (auto b : blocks()) flat.insert(flat.end(), b.begin(), b.end());
    return flat;
}

void ModelGradients::add_scaled(const ModelGradients& other, double alpha) {
    encoder.add_scaled(other.encoder, alpha);
    decoder.add_scaled(other.decoder, alpha);
}

void LossWeights::validate() const {
    for (double w : {lambda1, lambda2, lambda_antisym, lambda_linear, lambda_orthonorm}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("LossWeights: weights must be finite and >= 0");
    }
    if (!(lambda1 > 0.0 || lambda2 > 0.0)) {
        throw InvalidInput("LossWeights: at least one of lambda1, lambda2 must be positive");
    }
}

MlpSpec encoder_spec(const LatentShape& shape, double leaky_slope, double dropout_p) {
    const std::size_t d = shape.d_delta;
    return {{2 * shape.flat_size(), d, d, d, d}, leaky_slope, dropout_p};
}

MlpSpec decoder_spec(const LatentShape& shape, std::size_t decoder_hidden, double leaky_slope,
                     double dropout_p) {
    const std::size_t h = decoder_hidden;
    return {{shape.d_delta + shape.flat_size(), h, h, h, shape.flat_size()}, leaky_slope, dropout_p};
}

ModelParams init_model(const LatentShape& shape, std::size_t decoder_hidden, std::uint64_t seed,
                       double leaky_slope, double dropout_p) {
    shape.validate();
    if (decoder_hidden == 0) throw InvalidInput("init_model: decoder_hidden must be positive");
    ModelParams p;
    p.shape = shape;
    p.decoder_hidden = decoder_hidden;
    p.encoder_spec = encoder_spec(shape, leaky_slope, dropout_p);
    p.decoder_spec = decoder_spec(shape, decoder_hidden, leaky_slope, dropout_p);
    Rng rng(seed);
    p.encoder = numkit::init_mlp(p.encoder_spec, rng);
    p.decoder = numkit::init_mlp(p.decoder_spec, rng);
    return p;
}

void zero_decoder_output(ModelParams& params) {
    auto& w = params.decoder.weights.back();
    std::fill(w.span().begin(), w.span().end(), 0.0);
    auto& b = params.decoder.biases.back();
    std::fill(b.begin(), b.end(), 0.0);
}

namespace {

void check_latent(const ModelParams& params, const LatentVector& v, const char* what) {
    if (v.size() != params.shape.flat_size()) {
        throw DimensionError(std::string(what) + ": latent has length " + std::to_string(v.size()) +
                             ", model expects " + std::to_string(params.shape.flat_size()) + " (" +
                             std::to_string(params.shape.style_rows) + "x" +
                             std::to_string(params.shape.style_dim) + ")");
    }
}

void check_code(const ModelParams& params, std::span<const double> code, const char* what) {
    if (code.size() != params.shape.d_delta) {
        throw DimensionError(std::string(what) + ": code has length " + std::to_string(code.size()) +
                             ", model expects " + std::to_string(params.shape.d_delta));
    }
}

struct DecoderPass {
    Matrix residuals;  // rows x F
    numkit::MlpTape tape;
};

// Row r decodes [alphas[r]·codes[r] ‖ bases[r]].
DecoderPass decode_rows(const ModelParams& params, std::span<const LatentVector* const> bases,
                        std::span<const std::span<const double>> codes, std::span<const double> alphas,
                        Rng& rng, bool training) {
    const std::size_t d = params.shape.d_delta;
    const std::size_t f = params.shape.flat_size();
    Matrix x(bases.size(), d + f);
    for (std::size_t r = 0; r < bases.size(); ++r) {
        check_latent(params, *bases[r], "decode");
        check_code(params, codes[r], "decode");
        auto row = x.row(r);
        for (std::size_t c = 0; c < d; ++c) row[c] = alphas[r] * codes[r][c];
        std::copy(bases[r]->values.begin(), bases[r]->values.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
    }
    auto fwd = numkit::mlp_forward(params.decoder_spec, params.decoder, x, rng, training);
    return {std::move(fwd.output), std::move(fwd.tape)};
}

// Returns d(loss)/d(code) per row, already multiplied by that row's alpha.
Matrix decoder_backward(const ModelParams& params, const DecoderPass& pass, const Matrix& grad_residuals,
                        std::span<const double> alphas, ModelGradients& grads) {
    Matrix gin = numkit::mlp_backward_accumulate(params.decoder_spec, params.decoder, pass.tape,
                                                 grad_residuals, grads.decoder);
    const std::size_t d = params.shape.d_delta;
    Matrix gcode(gin.rows(), d);
    for (std::size_t r = 0; r < gin.rows(); ++r) {
        for (std::size_t c = 0; c < d; ++c) gcode(r, c) = alphas[r] * gin(r, c);
    }
    return gcode;
}

}  // namespace

EncoderPass encode_rows(const ModelParams& params, std::span<const LatentVector* const> firsts,
                        std::span<const LatentVector* const> seconds, Rng& rng, bool training) {
    if (firsts.size() != seconds.size()) throw DimensionError("encode_rows: pair lists differ in length");
    const std::size_t f = params.shape.flat_size();
    Matrix x(firsts.size(), 2 * f);
    for (std::size_t r = 0; r < firsts.size(); ++r) {
        check_latent(params, *firsts[r], "encode");
        check_latent(params, *seconds[r], "encode");
        auto row = x.row(r);
        std::copy(firsts[r]->values.begin(), firsts[r]->values.end(), row.begin());
        std::copy(seconds[r]->values.begin(), seconds[r]->values.end(), row.begin() + static_cast<std::ptrdiff_t>(f));
    }
    auto fwd = numkit::mlp_forward(params.encoder_spec, params.encoder, x, rng, training);
    return {std::move(fwd.output), std::move(fwd.tape)};
}

void encoder_backward(const ModelParams& params, const EncoderPass& pass, const Matrix& grad_codes,
                      ModelGradients& grads) {
    numkit::mlp_backward_accumulate(params.encoder_spec, params.encoder, pass.tape, grad_codes, grads.encoder);
}

DeltaCode encode(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j, Rng& rng,
                 bool training) {
    const LatentVector* first[] = {&a_i};
    const LatentVector* second[] = {&a_j};
    auto pass = encode_rows(params, first, second, rng, training);
    return {pass.codes.data()};
}

LatentVector decode_edit(const ModelParams& params, const LatentVector& base, const DeltaCode& delta,
                         double alpha, Rng& rng, bool training) {
    const LatentVector* bases[] = {&base};
    const std::span<const double> codes[] = {delta.values};
    const double alphas[] = {alpha};
    auto pass = decode_rows(params, bases, codes, alphas, rng, training);
    LatentVector out = base;
    axpy(1.0, pass.residuals.row(0), out.values);
    return out;
}

ResidualLossResult residual_loss(const ModelParams& params, const ResidualSample& s, const LossWeights& weights,
                                 Rng& rng, bool training) {
    ResidualLossResult res{0.0, 0.0, 0.0, ModelGradients::zeros(params)};
    const auto terms = accumulate_residual_loss(params, s, weights, rng, training, 1.0, res.grads);
    res.identity = terms.identity;
    res.transfer = terms.transfer;
    res.value = weights.lambda1 * terms.identity + weights.lambda2 * terms.transfer;
    return res;
}

ResidualTerms accumulate_residual_loss(const ModelParams& params, const ResidualSample& s,
                                       const LossWeights& weights, Rng& rng, bool training, double scale,
                                       ModelGradients& grads) {
    const LatentVector* first[] = {&s.a_i};
    const LatentVector* second[] = {&s.a_j};
    check_latent(params, s.b_i, "residual_loss");
    check_latent(params, s.b_j, "residual_loss");
    auto enc = encode_rows(params, first, second, rng, training);

    const LatentVector* bases[] = {&s.a_i, &s.b_i};
    const std::span<const double> codes[] = {enc.codes.row(0), enc.codes.row(0)};
    const double alphas[] = {1.0, 1.0};
    auto dec = decode_rows(params, bases, codes, alphas, rng, training);

    const LatentVector* targets[] = {&s.a_j, &s.b_j};
    const double lambdas[] = {scale * weights.lambda1, scale * weights.lambda2};
    double terms[2] = {0.0, 0.0};
    Matrix grad_res(2, params.shape.flat_size());
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < grad_res.cols(); ++c) {
            // â − target = base + residual − target
            const double e = bases[r]->values[c] + dec.residuals(r, c) - targets[r]->values[c];
            terms[r] += e * e;
            grad_res(r, c) = 2.0 * lambdas[r] * e;
        }
    }
    Matrix gcode = decoder_backward(params, dec, grad_res, alphas, grads);
    Matrix gdelta(1, params.shape.d_delta);
    for (std::size_t c = 0; c < gdelta.cols(); ++c) gdelta(0, c) = gcode(0, c) + gcode(1, c);
    encoder_backward(params, enc, gdelta, grads);
    return {terms[0], terms[1]};
}

LossResult antisymmetry_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                             Rng& rng, bool training) {
    LossResult res{0.0, ModelGradients::zeros(params)};
    res.value = accumulate_antisymmetry_loss(params, a_i, a_j, rng, training, 1.0, res.grads);
    return res;
}

double accumulate_antisymmetry_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                                    Rng& rng, bool training, double scale, ModelGradients& grads) {
    double value = 0.0;
    const LatentVector* first[] = {&a_i, &a_j};
    const LatentVector* second[] = {&a_j, &a_i};
    auto enc = encode_rows(params, first, second, rng, training);
    Matrix g(2, params.shape.d_delta);
    for (std::size_t c = 0; c < g.cols(); ++c) {
        const double s = enc.codes(0, c) + enc.codes(1, c);
        value += s * s;
        g(0, c) = 2.0 * scale * s;
        g(1, c) = 2.0 * scale * s;
    }
    encoder_backward(params, enc, g, grads);
    return value;
}

std::vector<LinearityTerm> linearity_terms(std::size_t n, std::size_t i, std::size_t j,
                                           std::span<const int> alphas) {
    std::vector<LinearityTerm> terms;
    const long step = static_cast<long>(j) - static_cast<long>(i);
    for (int a : alphas) {
        for (std::size_t k = 0; k < n; ++k) {
            const long t = static_cast<long>(k) + static_cast<long>(a) * step;
            if (t < 0 || t >= static_cast<long>(n)) continue;
            terms.push_back({k, a, static_cast<std::size_t>(t)});
        }
    }
    return terms;
}

LossResult linearity_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                          std::span<const LinearityTarget> targets, Rng& rng, bool training) {
    LossResult res{0.0, ModelGradients::zeros(params)};
    res.value = accumulate_linearity_loss(params, a_i, a_j, targets, rng, training, 1.0, res.grads);
    return res;
}

double accumulate_linearity_loss(const ModelParams& params, const LatentVector& a_i, const LatentVector& a_j,
                                 std::span<const LinearityTarget> targets, Rng& rng, bool training, double scale,
                                 ModelGradients& grads) {
    if (targets.empty()) throw InvalidInput("linearity_loss: no targets");
    double value = 0.0;
    const LatentVector* first[] = {&a_i};
    const LatentVector* second[] = {&a_j};
    auto enc = encode_rows(params, first, second, rng, training);

    const std::size_t n = targets.size();
    std::vector<const LatentVector*> bases(n);
    std::vector<std::span<const double>> codes(n, enc.codes.row(0));
    std::vector<double> alphas(n);
    for (std::size_t r = 0; r < n; ++r) {
        check_latent(params, targets[r].target, "linearity_loss");
        bases[r] = &targets[r].base;
        alphas[r] = targets[r].alpha;
    }
    auto dec = decode_rows(params, bases, codes, alphas, rng, training);

    Matrix grad_res(n, params.shape.flat_size());
    for (std::size_t r = 0; r < n; ++r) {
        const auto& base = targets[r].base.values;
        const auto& tgt = targets[r].target.values;
        for (std::size_t c = 0; c < grad_res.cols(); ++c) {
            const double e = base[c] + dec.residuals(r, c) - tgt[c];
            value += e * e;
            grad_res(r, c) = 2.0 * scale * e;
        }
    }
    Matrix gcode = decoder_backward(params, dec, grad_res, alphas, grads);
    Matrix gdelta(1, params.shape.d_delta);
    for (std::size_t r = 0; r < n; ++r) axpy(1.0, gcode.row(r), gdelta.row(0));
    encoder_backward(params, enc, gdelta, grads);
    return value;
}

LossResult linearity_loss(const ModelParams& params, std::span<const LatentVector> sequence, std::size_t i,
                          std::size_t j, std::span<const int> alphas, Rng& rng, bool training) {
    const std::size_t n = sequence.size();
    if (i >= n || j >= n) {
        throw InvalidInput("linearity_loss: pair (" + std::to_string(i) + "," + std::to_string(j) +
                           ") outside a sequence of length " + std::to_string(n));
    }
    const auto terms = linearity_terms(n, i, j, alphas);
    if (terms.empty()) throw InvalidInput("linearity_loss: every (k, alpha) target is out of range");
    std::vector<LinearityTarget> targets;
    targets.reserve(terms.size());
    for (const auto& t : terms) {
        targets.push_back({sequence[t.base_index], static_cast<double>(t.alpha), sequence[t.target_index]});
    }
    return linearity_loss(params, sequence[i], sequence[j], targets, rng, training);
}

OrthonormLossResult orthonorm_loss(const std::vector<std::vector<DeltaCode>>& groups) {
    if (groups.empty()) throw InvalidInput("orthonorm_loss: no attribute groups");
    OrthonormLossResult res;
    std::size_t dim = 0;
    bool any = false;
    for (const auto& g : groups) {
        for (const auto& code : g) {
            if (!any) {
                dim = code.size();
                any = true;
            } else if (code.size() != dim) {
                throw DimensionError("orthonorm_loss: codes of lengths " + std::to_string(dim) + " and " +
                                     std::to_string(code.size()));
            }
        }
    }
    if (!any) throw InvalidInput("orthonorm_loss: no codes");

    res.grads.resize(groups.size());
    for (std::size_t p = 0; p < groups.size(); ++p) {
        res.grads[p].assign(groups[p].size(), Vector(dim, 0.0));
        for (std::size_t a = 0; a < groups[p].size(); ++a) {
            const auto& v = groups[p][a].values;
            const double n = numkit::norm(v);
            res.value += (n - 1.0) * (n - 1.0);
            if (n > 0.0) axpy(2.0 * (n - 1.0) / n, v, res.grads[p][a]);
        }
    }
    for (std::size_t p = 0; p < groups.size(); ++p) {
        for (std::size_t q = p + 1; q < groups.size(); ++q) {
            for (std::size_t a = 0; a < groups[p].size(); ++a) {
                for (std::size_t b = 0; b < groups[q].size(); ++b) {
                    const auto& u = groups[p][a].values;
                    const auto& v = groups[q][b].values;
                    const double ip = numkit::dot(u, v);
                    res.value += ip * ip;
                    axpy(2.0 * ip, v, res.grads[p][a]);
                    axpy(2.0 * ip, u, res.grads[q][b]);
                }
            }
        }
    }
    return res;
}

}  // namespace dge::model
