#include "dge/numkit/pca.hpp"

#include "dge/errors.hpp"
#include "dge/numkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dge::numkit {

namespace {

void orthogonalize(std::span<double> v, const std::vector<Vector>& basis) {
    // Two passes of classical Gram-Schmidt keep the result orthogonal to round-off.
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) axpy(-dot(v, b), b, v);
    }
}

bool normalize(std::span<double> v) {
    const double n = norm(v);
    if (!(n > 0.0)) return false;
    for (double& x : v) x /= n;
    return true;
}

}  // namespace

PcaResult pca(const Matrix& data, std::size_t k, const PcaOptions& options) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    if (n < 2) throw InvalidInput("pca: need at least 2 samples, got " + std::to_string(n));
    if (k == 0 || k > d) {
        throw InvalidInput("pca: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(d) + "]");
    }

    PcaResult res;
    res.mean.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) axpy(1.0, data.row(r), res.mean);
    for (double& m : res.mean) m /= static_cast<double>(n);

    Matrix centered = data;
    for (std::size_t r = 0; r < n; ++r) axpy(-1.0, res.mean, centered.row(r));

    const double denom = static_cast<double>(n - 1);
    double total_var = 0.0;
    for (double x : centered.span()) total_var += x * x;
    total_var /= denom;

    Vector scores(n);
    auto apply_cov = [&](std::span<const double> v, std::span<double> out) {
        for (std::size_t r = 0; r < n; ++r) scores[r] = dot(centered.row(r), v);
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t r = 0; r < n; ++r) axpy(scores[r] / denom, centered.row(r), out);
    };

    Rng rng(options.seed);
    std::vector<Vector> found;
    Vector eigen;
    Vector next(d);
    for (std::size_t c = 0; c < k; ++c) {
        Vector v(d);
        do {
            for (double& x : v) x = rng.normal();
            orthogonalize(v, found);
        } while (!normalize(v));

        for (std::size_t it = 0; it < options.max_iterations; ++it) {
            apply_cov(v, next);
            orthogonalize(next, found);
            const double lambda = norm(next);
            if (lambda <= total_var * 1e-14) break;  // remaining variance is zero
            for (double& x : next) x /= lambda;
            double diff = 0.0;
            for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(next[i] - v[i]));
            v.swap(next);
            if (diff < options.tolerance) break;
        }
        orthogonalize(v, found);
        normalize(v);
        apply_cov(v, next);
        eigen.push_back(std::max(0.0, dot(v, next)));
        found.push_back(std::move(v));
    }

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eigen[a] > eigen[b]; });

    res.components = Matrix(k, d);
    res.explained_variance.resize(k);
    res.explained_ratio.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        Vector v = found[order[c]];
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i) {
            if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
        }
        if (v[arg] < 0.0) {
            for (double& x : v) x = -x;
        }
        std::copy(v.begin(), v.end(), res.components.row(c).begin());
        res.explained_variance[c] = eigen[order[c]];
        res.explained_ratio[c] = total_var > 0.0 ? eigen[order[c]] / total_var : 0.0;
    }

    res.projections = Matrix(n, k);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
            res.projections(r, c) = dot(centered.row(r), res.components.row(c));
        }
    }
    return res;
}

}  // namespace dge::numkit
