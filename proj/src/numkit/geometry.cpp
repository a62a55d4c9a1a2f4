#include "dge/numkit/geometry.hpp"

#include "dge/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dge::numkit {

double chord_deviation_ratio(std::span<const Vector> points) {
    if (points.size() < 3) throw InvalidInput("chord deviation needs at least 3 points");
    const Vector& first = points.front();
    const Vector& last = points.back();
    for (const auto& p : points) {
        if (p.size() != first.size()) throw DimensionError("chord deviation: points of different length");
    }
    Vector chord(first.size());
    for (std::size_t i = 0; i < chord.size(); ++i) chord[i] = last[i] - first[i];
    const double len = norm(chord);
    if (!(len > 0.0)) throw InvalidInput("chord deviation: zero-length chord");
    for (double& c : chord) c /= len;

    double worst = 0.0;
    Vector rel(first.size());
    for (std::size_t k = 1; k + 1 < points.size(); ++k) {
        for (std::size_t i = 0; i < rel.size(); ++i) rel[i] = points[k][i] - first[i];
        const double along = dot(rel, chord);
        axpy(-along, chord, rel);
        worst = std::max(worst, norm(rel));
    }
    return worst / len;
}

}  // namespace dge::numkit
