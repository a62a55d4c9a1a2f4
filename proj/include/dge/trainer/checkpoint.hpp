#pragma once

#include "dge/trainer/trainer.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <span>

namespace dge::trainer {

// Checkpoint layout, all integers little-endian:
//   "DGEC" | u32 version | u32 header length | header JSON (UTF-8)
//   | f64 blocks: model parameters (encoder then decoder, w0 b0 w1 b1 ...),
//     Adam first moments, Adam second moments, history (6 values per epoch)
//   | u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    TrainState state;
    TrainConfig config;
};

// Written to a temporary file next to `path`, then renamed over it.
void save_checkpoint(const TrainState& state, const TrainConfig& config, const std::filesystem::path& path);

// Throws IoError when unreadable, FormatError on magic/version/checksum/layout problems.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep their defaults; used for checkpoint headers (the CLI parses strictly).
TrainConfig train_config_from_json(const nlohmann::json& j);

// CRC-32 (IEEE 802.3, as in zlib/PNG).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// Little-endian encode/decode helpers shared with the latent file format.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset);
double get_f64(std::span<const std::uint8_t> in, std::size_t offset);
float get_f32(std::span<const std::uint8_t> in, std::size_t offset);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Atomic: write `path`.tmp, flush, rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dge::trainer
