#include "dge/cli/latent_file.hpp"

#include "dge/errors.hpp"
#include "dge/trainer/checkpoint.hpp"

#include <limits>

namespace dge::cli {

namespace {

constexpr char kMagic[4] = {'D', 'L', 'A', 'T'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 4;

std::uint32_t narrow(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidInput(std::string("latent file: ") + what + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_latent_file(const LatentFile& file) {
    const std::size_t dim = file.style_rows * file.style_dim;
    if (dim == 0) throw InvalidInput("latent file: zero latent size");
    for (const auto& l : file.latents) {
        if (l.size() != dim) {
            throw DimensionError("latent file: latent of length " + std::to_string(l.size()) + ", expected " +
                                 std::to_string(dim));
        }
    }
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.reserve(kHeaderBytes + file.latents.size() * dim * 4 + 4);
    trainer::put_u32(out, kLatentFileVersion);
    trainer::put_u32(out, narrow(file.latents.size(), "count"));
    trainer::put_u32(out, narrow(file.style_rows, "style_rows"));
    trainer::put_u32(out, narrow(file.style_dim, "style_dim"));
    for (const auto& l : file.latents) {
        for (double v : l.values) trainer::put_f32(out, static_cast<float>(v));
    }
    trainer::put_u32(out, trainer::crc32(out));
    return out;
}

LatentFile decode_latent_file(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes + 4) throw FormatError("latent file: truncated header");
    if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("latent file: bad magic");
    const std::uint32_t stored_crc = trainer::get_u32(bytes, bytes.size() - 4);
    if (trainer::crc32(bytes.first(bytes.size() - 4)) != stored_crc) {
        throw FormatError("latent file: checksum mismatch");
    }
    const std::uint32_t version = trainer::get_u32(bytes, 4);
    if (version != kLatentFileVersion) {
        throw FormatError("latent file: unsupported version " + std::to_string(version));
    }
    LatentFile file;
    const std::size_t count = trainer::get_u32(bytes, 8);
    file.style_rows = trainer::get_u32(bytes, 12);
    file.style_dim = trainer::get_u32(bytes, 16);
    const std::size_t dim = file.style_rows * file.style_dim;
    if (dim == 0) throw FormatError("latent file: zero latent size");
    if (bytes.size() != kHeaderBytes + count * dim * 4 + 4) {
        throw FormatError("latent file: payload is " + std::to_string(bytes.size() - kHeaderBytes - 4) +
                          " bytes, header implies " + std::to_string(count * dim * 4));
    }
    std::size_t offset = kHeaderBytes;
    file.latents.resize(count);
    for (auto& l : file.latents) {
        l.values.resize(dim);
        for (double& v : l.values) {
            v = trainer::get_f32(bytes, offset);
            offset += 4;
        }
    }
    return file;
}

void write_latent_file(const std::filesystem::path& path, const LatentFile& file) {
    trainer::write_file_atomic(path, encode_latent_file(file));
}

LatentFile read_latent_file(const std::filesystem::path& path) {
    try {
        return decode_latent_file(trainer::read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

model::LatentVector round_to_f32(const model::LatentVector& v) {
    model::LatentVector out = v;
    for (double& x : out.values) x = static_cast<double>(static_cast<float>(x));
    return out;
}

}  // namespace dge::cli
