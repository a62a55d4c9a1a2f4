#pragma once

#include "dge/numkit/matrix.hpp"

#include <cstdint>

namespace dge::numkit {

struct PcaOptions {
    double tolerance = 1e-9;
    std::size_t max_iterations = 10000;
    std::uint64_t seed = 0x5eedULL;
};

struct PcaResult {
    Vector mean;
    // k x dim, unit rows, mutually orthogonal.
    Matrix components;
    // Eigenvalues of the sample covariance (divisor n-1), descending.
    Vector explained_variance;
    // Share of total variance per component; zeros when the data has no variance.
    Vector explained_ratio;
    // n x k coordinates of the centered data.
    Matrix projections;
};

// Top-k principal components by power iteration with deflation against the
// components already found. Rows of data are samples. The sign of each component
// is fixed so that its largest-magnitude entry is positive.
PcaResult pca(const Matrix& data, std::size_t k, const PcaOptions& options = {});

}  // namespace dge::numkit
