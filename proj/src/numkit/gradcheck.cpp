#include "dge/numkit/gradcheck.hpp"

#include "dge/errors.hpp"
#include "dge/numkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace dge::numkit {

GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<const std::span<double>> params,
                                  std::span<const double> analytic,
                                  const GradCheckOptions& options) {
    if (!(options.eps > 0.0) || !std::isfinite(options.eps)) {
        throw InvalidInput("finite_diff_check: eps must be positive and finite");
    }
    // Flat index -> (block, offset).
    std::vector<std::pair<std::size_t, std::size_t>> where;
    for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t i = 0; i < params[b].size(); ++i) where.emplace_back(b, i);
    }
    if (analytic.size() != where.size()) {
        throw DimensionError("finite_diff_check: " + std::to_string(where.size()) +
                             " parameters but analytic gradient has " + std::to_string(analytic.size()));
    }

    std::vector<std::size_t> coords(where.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords != 0 && options.max_coords < coords.size()) {
        Rng rng(options.seed);
        // Partial Fisher-Yates: the first max_coords entries are a uniform sample.
        for (std::size_t i = 0; i < options.max_coords; ++i) {
            std::swap(coords[i], coords[i + rng.uniform_index(coords.size() - i)]);
        }
        coords.resize(options.max_coords);
        std::sort(coords.begin(), coords.end());
    }

    GradCheckReport report;
    for (std::size_t c : coords) {
        auto [b, i] = where[c];
        double& theta = params[b][i];
        const double saved = theta;
        theta = saved + options.eps;
        const double f_plus = loss_fn();
        theta = saved - options.eps;
        const double f_minus = loss_fn();
        theta = saved;

        const double numeric = (f_plus - f_minus) / (2.0 * options.eps);
        const double a = analytic[c];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
        const double rel = std::abs(a - numeric) / denom;
        ++report.coords_checked;
        if (!(rel <= report.max_rel_error)) {  // also captures NaN
            report.max_rel_error = rel;
            report.worst_coord = c;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

}  // namespace dge::numkit
