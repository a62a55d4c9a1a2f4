#pragma once

#include "dge/model/delta_model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dge::cli {

// Latent file layout, integers little-endian:
//   "DLAT" | u32 version | u32 count | u32 style_rows | u32 style_dim
//   | count·rows·dim f32, one latent after another | u32 CRC-32 of all preceding bytes
// Latents are stored as 32-bit floats; reading widens them back to double.
inline constexpr std::uint32_t kLatentFileVersion = 1;

struct LatentFile {
    std::size_t style_rows = 0;
    std::size_t style_dim = 0;
    std::vector<model::LatentVector> latents;
};

std::vector<std::uint8_t> encode_latent_file(const LatentFile& file);
// Throws FormatError on bad magic, version, size or checksum.
LatentFile decode_latent_file(std::span<const std::uint8_t> bytes);

void write_latent_file(const std::filesystem::path& path, const LatentFile& file);
LatentFile read_latent_file(const std::filesystem::path& path);

// Rounds every component to the nearest float, as storage does.
model::LatentVector round_to_f32(const model::LatentVector& v);

}  // namespace dge::cli
