#pragma once

#include "dge/numkit/matrix.hpp"

#include <span>
#include <vector>

namespace dge::numkit {

// Largest perpendicular distance of an interior point from the line through the
// first and last points, divided by the first-to-last distance. 0 for a straight
// polyline. Throws InvalidInput for fewer than 3 points or a zero-length chord.
double chord_deviation_ratio(std::span<const Vector> points);

}  // namespace dge::numkit
