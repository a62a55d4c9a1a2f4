#include "dge/numkit/mlp.hpp"

#include "dge/errors.hpp"
#include "dge/numkit/layers.hpp"

#include <cmath>

namespace dge::numkit {

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2) {
        throw InvalidInput("MlpSpec: need at least two layer sizes, got " +
                           std::to_string(layer_sizes.size()));
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw InvalidInput("MlpSpec: zero-sized layer");
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
        throw InvalidInput("MlpSpec: leaky_slope must lie in (0,1)");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw InvalidInput("MlpSpec: dropout_p must lie in [0,1)");
    }
}

MlpParams MlpParams::zeros(const MlpSpec& spec) {
    spec.validate();
    MlpParams p;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        p.weights.emplace_back(spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        p.biases.emplace_back(spec.layer_sizes[l + 1], 0.0);
    }
    return p;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

std::vector<std::span<double>> MlpParams::blocks() {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.emplace_back(weights[l].span());
        out.emplace_back(biases[l]);
    }
    return out;
}

std::vector<std::span<const double>> MlpParams::blocks() const {
    std::vector<std::span<const double>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.emplace_back(weights[l].span());
        out.emplace_back(biases[l]);
    }
    return out;
}

void MlpParams::set_zero() {
    for (auto b : blocks()) std::fill(b.begin(), b.end(), 0.0);
}

void MlpParams::add_scaled(const MlpParams& other, double alpha) {
    auto dst = blocks();
    const auto src = other.blocks();
    if (dst.size() != src.size()) throw DimensionError("MlpParams::add_scaled: layer count differs");
    for (std::size_t i = 0; i < dst.size(); ++i) axpy(alpha, src[i], dst[i]);
}

bool MlpParams::all_finite() const {
    for (auto b : blocks()) {
        for (double v : b) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

bool MlpParams::matches(const MlpSpec& spec) const {
    if (weights.size() != spec.num_layers() || biases.size() != spec.num_layers()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != spec.layer_sizes[l] || weights[l].cols() != spec.layer_sizes[l + 1] ||
            biases[l].size() != spec.layer_sizes[l + 1]) {
            return false;
        }
    }
    return true;
}

MlpParams init_mlp(const MlpSpec& spec, Rng& rng) {
    MlpParams p = MlpParams::zeros(spec);
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const double fan = static_cast<double>(spec.layer_sizes[l] + spec.layer_sizes[l + 1]);
        const double limit = std::sqrt(6.0 / fan);
        for (double& w : p.weights[l].span()) w = rng.uniform(-limit, limit);
    }
    return p;
}

namespace {

void check_shapes(const MlpSpec& spec, const MlpParams& params) {
    spec.validate();
    if (!params.matches(spec)) {
        throw DimensionError("MLP parameters do not match layer sizes");
    }
}

}  // namespace

MlpForward mlp_forward(const MlpSpec& spec, const MlpParams& params, const Matrix& x, Rng& rng,
                       bool training) {
    check_shapes(spec, params);
    if (x.cols() != spec.input_size()) {
        throw DimensionError("mlp_forward: input is " + x.shape_string() + ", network expects " +
                             std::to_string(spec.input_size()) + " columns");
    }
    MlpForward fwd;
    const std::size_t n_layers = spec.num_layers();
    fwd.tape.layer_inputs.reserve(n_layers);
    fwd.tape.layer_inputs.push_back(x);
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        Matrix z = linear_forward(fwd.tape.layer_inputs.back(), params.weights[l], params.biases[l]);
        DropoutResult d = dropout(leaky_relu(z, spec.leaky_slope), spec.dropout_p, rng, training);
        fwd.tape.pre_activations.push_back(std::move(z));
        fwd.tape.masks.push_back(std::move(d.mask));
        fwd.tape.layer_inputs.push_back(std::move(d.output));
    }
    fwd.output = linear_forward(fwd.tape.layer_inputs.back(), params.weights.back(), params.biases.back());
    return fwd;
}

Matrix mlp_backward_accumulate(const MlpSpec& spec, const MlpParams& params, const MlpTape& tape,
                               const Matrix& grad_output, MlpParams& grads) {
    check_shapes(spec, params);
    const std::size_t n_layers = spec.num_layers();
    if (tape.layer_inputs.size() != n_layers || tape.pre_activations.size() + 1 != n_layers ||
        tape.masks.size() + 1 != n_layers) {
        throw DimensionError("mlp_backward: tape has " + std::to_string(tape.layer_inputs.size()) +
                             " layers, spec has " + std::to_string(n_layers));
    }
    if (!grads.matches(spec)) throw DimensionError("mlp_backward: gradient accumulator shape mismatch");
    const std::size_t rows = tape.layer_inputs.front().rows();
    if (grad_output.rows() != rows || grad_output.cols() != spec.output_size()) {
        throw DimensionError("mlp_backward: grad_output is " + grad_output.shape_string() +
                             ", expected " + std::to_string(rows) + "x" +
                             std::to_string(spec.output_size()));
    }

    Matrix g = grad_output;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& h = tape.layer_inputs[l];
        const Matrix& w = params.weights[l];
        Matrix& dw = grads.weights[l];
        Vector& db = grads.biases[l];
        for (std::size_t r = 0; r < rows; ++r) {
            const auto gr = g.row(r);
            for (std::size_t c = 0; c < gr.size(); ++c) db[c] += gr[c];
            for (std::size_t k = 0; k < h.cols(); ++k) {
                const double hk = h(r, k);
                if (hk == 0.0) continue;
                auto dwk = dw.row(k);
                for (std::size_t c = 0; c < gr.size(); ++c) dwk[c] += hk * gr[c];
            }
        }
        Matrix gh(rows, w.rows());
        for (std::size_t r = 0; r < rows; ++r) {
            const auto gr = g.row(r);
            for (std::size_t k = 0; k < w.rows(); ++k) {
                const auto wk = w.row(k);
                double s = 0.0;
                for (std::size_t c = 0; c < gr.size(); ++c) s += gr[c] * wk[c];
                gh(r, k) = s;
            }
        }
        if (l == 0) return gh;
        const Matrix& z = tape.pre_activations[l - 1];
        const Matrix& mask = tape.masks[l - 1];
        auto ghs = gh.span();
        const auto zs = z.span();
        const auto ms = mask.span();
        for (std::size_t i = 0; i < ghs.size(); ++i) {
            ghs[i] *= ms[i] * (zs[i] < 0.0 ? spec.leaky_slope : 1.0);
        }
        g = std::move(gh);
    }
    return g;  // unreachable: n_layers >= 1
}

MlpBackward mlp_backward(const MlpSpec& spec, const MlpParams& params, const MlpTape& tape,
                         const Matrix& grad_output) {
    MlpBackward out{MlpParams::zeros(spec), {}};
    out.grad_input = mlp_backward_accumulate(spec, params, tape, grad_output, out.grads);
    return out;
}

}  // namespace dge::numkit
