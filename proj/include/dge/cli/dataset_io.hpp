#pragma once

#include "dge/cli/run_config.hpp"
#include "dge/synth/synth_world.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dge::cli {

inline constexpr const char* kManifestName = "manifest.json";

struct StoredDataset {
    WorldSettings settings;
    // Latents as stored (rounded to 32-bit floats).
    synth::Dataset dataset;
    // File name of each sequence, relative to the data directory.
    std::vector<std::string> files;
};

// Generates the oracle dataset for `settings` and writes one latent file per
// sequence plus manifest.json (ground-truth attribute values, split, world settings).
StoredDataset write_dataset(const std::filesystem::path& dir, const WorldSettings& settings);

// Reads manifest.json and every listed latent file. Throws FormatError on
// inconsistent contents, IoError when a file is unreadable.
StoredDataset read_dataset(const std::filesystem::path& dir);

// The oracle that produced a stored dataset.
synth::OracleWorld world_of(const WorldSettings& settings);

}  // namespace dge::cli
