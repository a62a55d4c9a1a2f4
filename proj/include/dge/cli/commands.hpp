#pragma once

#include "dge/cli/dataset_io.hpp"
#include "dge/eval/csv.hpp"
#include "dge/model/delta_model.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace dge::cli {

// Exit codes of the `dge` tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs the command line; machine-readable results go to `out`, usage text and
// errors to `err`. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::size_t trials = 200;
    std::uint64_t seed = 1;
    bool linear_baseline = false;
};

struct SummaryRow {
    std::string metric;
    double model = 0.0;
    double linear = 0.0;  // NaN without --baseline linear
};

struct EvalReport {
    eval::CsvTable error_stats{{"x"}};
    eval::CsvTable identity_scores{{"x"}};
    eval::CsvTable paths_pca{{"x"}};
    eval::CsvTable delta_overlap{{"x"}};
    std::vector<SummaryRow> summary;
};

// Every table written by `dge eval`. Throws DimensionError when the model and
// the data disagree on the latent shape.
EvalReport build_eval_report(const model::ModelParams& params, const StoredDataset& data, const EvalOptions& options);

// Target changes of the magnitude-control trials: 21 values spanning
// [−width/2, width/2] of the attribute range.
std::vector<double> magnitude_targets(const synth::WorldConfig& world);

std::string format_summary(const std::vector<SummaryRow>& rows, bool with_linear);

}  // namespace dge::cli
