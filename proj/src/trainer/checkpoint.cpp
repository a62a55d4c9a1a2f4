#include "dge/trainer/checkpoint.hpp"

#include "dge/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace dge::trainer {

using nlohmann::json;

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
        crc = ::crc32(crc, bytes.data() + done, chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>(bits >> s));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
    if (offset + 4 > in.size()) throw FormatError("unexpected end of data");
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[offset + b]) << (8 * b);
    return v;
}

double get_f64(std::span<const std::uint8_t> in, std::size_t offset) {
    if (offset + 8 > in.size()) throw FormatError("unexpected end of data");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(in[offset + b]) << (8 * b);
    return std::bit_cast<double>(v);
}

float get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
    return std::bit_cast<float>(get_u32(in, offset));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("error reading " + path.string());
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("error writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

json to_json(const TrainConfig& c) {
    return json{
        {"epochs", c.epochs},
        {"lr", c.lr},
        {"weight_decay", c.weight_decay},
        {"decoupled_weight_decay", c.decoupled_weight_decay},
        {"model",
         {{"d_delta", c.model.d_delta},
          {"decoder_hidden", c.model.decoder_hidden},
          {"leaky_slope", c.model.leaky_slope},
          {"dropout", c.model.dropout_p}}},
        {"loss",
         {{"lambda1", c.loss.lambda1},
          {"lambda2", c.loss.lambda2},
          {"lambda_antisym", c.loss.lambda_antisym},
          {"lambda_linear", c.loss.lambda_linear},
          {"lambda_orthonorm", c.loss.lambda_orthonorm}}},
        {"noise", {{"sigma", c.noise.sigma}, {"shared_per_class", c.noise.shared_per_class}}},
        {"seed", c.seed},
        {"linearity_alphas", c.linearity_alphas},
        {"linearity_samples", c.linearity_samples},
        {"role_swap", c.role_swap},
        {"antisym_self_pair", c.antisym_self_pair},
        {"checkpoint_interval", c.checkpoint_interval},
        {"checkpoint_path", c.checkpoint_path},
        {"convergence_window", c.convergence_window},
        {"convergence_threshold", c.convergence_threshold},
    };
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "lr", c.lr);
    read_opt(j, "weight_decay", c.weight_decay);
    read_opt(j, "decoupled_weight_decay", c.decoupled_weight_decay);
    if (j.contains("model")) {
        const auto& m = j.at("model");
        read_opt(m, "d_delta", c.model.d_delta);
        read_opt(m, "decoder_hidden", c.model.decoder_hidden);
        read_opt(m, "leaky_slope", c.model.leaky_slope);
        read_opt(m, "dropout", c.model.dropout_p);
    }
    if (j.contains("loss")) {
        const auto& l = j.at("loss");
        read_opt(l, "lambda1", c.loss.lambda1);
        read_opt(l, "lambda2", c.loss.lambda2);
        read_opt(l, "lambda_antisym", c.loss.lambda_antisym);
        read_opt(l, "lambda_linear", c.loss.lambda_linear);
        read_opt(l, "lambda_orthonorm", c.loss.lambda_orthonorm);
    }
    if (j.contains("noise")) {
        read_opt(j.at("noise"), "sigma", c.noise.sigma);
        read_opt(j.at("noise"), "shared_per_class", c.noise.shared_per_class);
    }
    read_opt(j, "seed", c.seed);
    read_opt(j, "linearity_alphas", c.linearity_alphas);
    read_opt(j, "linearity_samples", c.linearity_samples);
    read_opt(j, "role_swap", c.role_swap);
    read_opt(j, "antisym_self_pair", c.antisym_self_pair);
    read_opt(j, "checkpoint_interval", c.checkpoint_interval);
    read_opt(j, "checkpoint_path", c.checkpoint_path);
    read_opt(j, "convergence_window", c.convergence_window);
    read_opt(j, "convergence_threshold", c.convergence_threshold);
    return c;
}

void save_checkpoint(const TrainState& st, const TrainConfig& config, const std::filesystem::path& path) {
    const auto& p = st.params;
    const auto& opt = st.optimizer;
    json header{
        {"format", "DGEC"},
        {"shape",
         {{"style_rows", p.shape.style_rows}, {"style_dim", p.shape.style_dim}, {"d_delta", p.shape.d_delta}}},
        {"decoder_hidden", p.decoder_hidden},
        {"leaky_slope", p.encoder_spec.leaky_slope},
        {"dropout", p.encoder_spec.dropout_p},
        {"encoder_layers", p.encoder_spec.layer_sizes},
        {"decoder_layers", p.decoder_spec.layer_sizes},
        {"parameter_count", p.parameter_count()},
        {"rng_state", st.rng.state()},
        {"converged", st.converged},
        {"optimizer",
         {{"step", opt.step},
          {"lr", opt.lr},
          {"weight_decay", opt.weight_decay},
          {"beta1", opt.beta1},
          {"beta2", opt.beta2},
          {"eps", opt.eps},
          {"decoupled_weight_decay", opt.decoupled_weight_decay}}},
        {"history_epochs", st.history.records.size()},
        {"config", to_json(config)},
    };
    const std::string text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(16 + text.size() + 8 * (3 * p.parameter_count() + 6 * st.history.records.size()));
    out.insert(out.end(), {'D', 'G', 'E', 'C'});
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (auto b : p.blocks()) {
        for (double v : b) put_f64(out, v);
    }
    for (double v : opt.m) put_f64(out, v);
    for (double v : opt.v) put_f64(out, v);
    for (const auto& r : st.history.records) {
        for (double v : {r.total, r.identity, r.transfer, r.antisym, r.linear, r.orthonorm}) put_f64(out, v);
    }
    put_u32(out, crc32(out));
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    const std::span<const std::uint8_t> all(bytes);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "DGEC", 4) != 0) {
        throw FormatError(path.string() + ": not a checkpoint (bad magic)");
    }
    const std::uint32_t stored_crc = get_u32(all, bytes.size() - 4);
    if (crc32(all.first(bytes.size() - 4)) != stored_crc) {
        throw FormatError(path.string() + ": checksum mismatch (truncated or corrupt)");
    }
    const std::uint32_t version = get_u32(all, 4);
    if (version != kCheckpointVersion) {
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t header_len = get_u32(all, 8);
    if (12 + static_cast<std::size_t>(header_len) > bytes.size() - 4) throw FormatError(path.string() + ": bad header length");

    Checkpoint ck;
    try {
        const json h = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
        ck.config = train_config_from_json(h.at("config"));
        model::LatentShape shape{h.at("shape").at("style_rows").get<std::size_t>(),
                                 h.at("shape").at("style_dim").get<std::size_t>(),
                                 h.at("shape").at("d_delta").get<std::size_t>()};
        ck.state.params = model::init_model(shape, h.at("decoder_hidden").get<std::size_t>(), 0,
                                            h.at("leaky_slope").get<double>(), h.at("dropout").get<double>());
        if (ck.state.params.parameter_count() != h.at("parameter_count").get<std::size_t>()) {
            throw FormatError(path.string() + ": parameter count does not match the recorded shapes");
        }
        ck.state.rng.set_state(h.at("rng_state").get<std::uint64_t>());
        ck.state.converged = h.at("converged").get<bool>();
        const auto& o = h.at("optimizer");
        auto& opt = ck.state.optimizer;
        opt.step = o.at("step").get<std::uint64_t>();
        opt.lr = o.at("lr").get<double>();
        opt.weight_decay = o.at("weight_decay").get<double>();
        opt.beta1 = o.at("beta1").get<double>();
        opt.beta2 = o.at("beta2").get<double>();
        opt.eps = o.at("eps").get<double>();
        opt.decoupled_weight_decay = o.at("decoupled_weight_decay").get<bool>();
        const std::size_t n_params = ck.state.params.parameter_count();
        const std::size_t epochs = h.at("history_epochs").get<std::size_t>();

        const std::size_t expected = 12 + header_len + 8 * (3 * n_params + 6 * epochs) + 4;
        if (bytes.size() != expected) {
            throw FormatError(path.string() + ": payload size " + std::to_string(bytes.size()) + " != expected " +
                              std::to_string(expected));
        }
        std::size_t off = 12 + header_len;
        for (auto b : ck.state.params.blocks()) {
            for (double& v : b) {
                v = get_f64(all, off);
                off += 8;
            }
        }
        opt.m.resize(n_params);
        opt.v.resize(n_params);
        for (double& v : opt.m) {
            v = get_f64(all, off);
            off += 8;
        }
        for (double& v : opt.v) {
            v = get_f64(all, off);
            off += 8;
        }
        ck.state.history.records.resize(epochs);
        for (auto& r : ck.state.history.records) {
            for (double* v : {&r.total, &r.identity, &r.transfer, &r.antisym, &r.linear, &r.orthonorm}) {
                *v = get_f64(all, off);
                off += 8;
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": malformed header: " + e.what());
    } catch (const InvalidInput& e) {
        throw FormatError(path.string() + ": invalid header: " + e.what());
    }
    return ck;
}

}  // namespace dge::trainer
