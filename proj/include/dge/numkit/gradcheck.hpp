#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace dge::numkit {

struct GradCheckOptions {
    double eps = 1e-5;
    // 0 checks every coordinate; otherwise a seeded sample of this many.
    std::size_t max_coords = 0;
    std::uint64_t seed = 1;
    // Denominator floor for the relative error, so coordinates whose true
    // gradient is zero are judged on absolute error instead of round-off ratios.
    double denominator_floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;
};

// Central differences (f(θ+eps) - f(θ-eps)) / 2eps against an analytic gradient.
// params are perturbed in place and restored; loss_fn must be deterministic
// (reseed any dropout generator inside it). analytic is the flattened gradient
// in the same block order as params.
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<const std::span<double>> params,
                                  std::span<const double> analytic,
                                  const GradCheckOptions& options = {});

}  // namespace dge::numkit
