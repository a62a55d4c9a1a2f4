#pragma once

#include "dge/numkit/matrix.hpp"
#include "dge/numkit/rng.hpp"

namespace dge::numkit {

// y = x·w + b, b broadcast over rows.
Matrix linear_forward(const Matrix& x, const Matrix& w, std::span<const double> b);

Matrix leaky_relu(const Matrix& x, double slope);

struct DropoutResult {
    Matrix output;
    // Per-entry multiplier actually applied: 0 for dropped entries, 1/(1-p) for survivors.
    // All ones in eval mode or when p == 0.
    Matrix mask;
};

// Inverted dropout. Draws exactly one uniform per entry in training mode when p > 0,
// none otherwise.
DropoutResult dropout(const Matrix& x, double p, Rng& rng, bool training);

}  // namespace dge::numkit
