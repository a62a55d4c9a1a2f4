#include "dge/numkit/layers.hpp"

#include "dge/errors.hpp"

namespace dge::numkit {

Matrix linear_forward(const Matrix& x, const Matrix& w, std::span<const double> b) {
    if (x.cols() != w.rows() || b.size() != w.cols()) {
        throw DimensionError("linear_forward: x is " + x.shape_string() + ", w is " +
                             w.shape_string() + ", b has length " + std::to_string(b.size()));
    }
    Matrix y(x.rows(), w.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto out = y.row(r);
        std::copy(b.begin(), b.end(), out.begin());
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double xk = x(r, k);
            if (xk == 0.0) continue;
            const auto wk = w.row(k);
            for (std::size_t c = 0; c < out.size(); ++c) out[c] += xk * wk[c];
        }
    }
    return y;
}

Matrix leaky_relu(const Matrix& x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw InvalidInput("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
    }
    Matrix y = x;
    for (double& v : y.span()) {
        if (v < 0.0) v *= slope;
    }
    return y;
}

DropoutResult dropout(const Matrix& x, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw InvalidInput("dropout: p must lie in [0,1), got " + std::to_string(p));
    }
    DropoutResult res{x, Matrix(x.rows(), x.cols(), 1.0)};
    if (!training || p == 0.0) return res;
    const double keep_scale = 1.0 / (1.0 - p);
    auto out = res.output.span();
    auto mask = res.mask.span();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = rng.uniform() < p ? 0.0 : keep_scale;
        mask[i] = m;
        out[i] *= m;
    }
    return res;
}

}  // namespace dge::numkit
