#include "dge/cli/run_config.hpp"

#include "dge/errors.hpp"

#include <fstream>
#include <sstream>
#include <utility>
#include <vector>

namespace dge::cli {

using nlohmann::json;

void WorldSettings::validate() const {
    try {
        world.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    if (points < 3) throw ConfigError("world.points must be at least 3, got " + std::to_string(points));
    if (train_classes == 0 || train_classes >= world.n_classes) {
        throw ConfigError("world.train_classes must lie in [1, classes), got " + std::to_string(train_classes));
    }
}

json to_json(const RunConfig& c) {
    const auto& w = c.data.world;
    const auto& t = c.train;
    return json{
        {"shape", {{"style_rows", w.shape.style_rows}, {"style_dim", w.shape.style_dim}}},
        {"world",
         {{"seed", w.seed},
          {"classes", w.n_classes},
          {"train_classes", c.data.train_classes},
          {"attributes", w.n_attributes},
          {"points", c.data.points},
          {"range", {w.range_lo, w.range_hi}},
          {"curvature", w.curvature}}},
        {"model",
         {{"d_delta", t.model.d_delta},
          {"decoder_hidden", t.model.decoder_hidden},
          {"leaky_slope", t.model.leaky_slope},
          {"dropout", t.model.dropout_p}}},
        {"loss",
         {{"lambda1", t.loss.lambda1},
          {"lambda2", t.loss.lambda2},
          {"lambda_antisym", t.loss.lambda_antisym},
          {"lambda_linear", t.loss.lambda_linear},
          {"lambda_orthonorm", t.loss.lambda_orthonorm}}},
        {"noise", {{"sigma", t.noise.sigma}, {"shared_per_class", t.noise.shared_per_class}}},
        {"training",
         {{"epochs", t.epochs},
          {"lr", t.lr},
          {"weight_decay", t.weight_decay},
          {"decoupled_weight_decay", t.decoupled_weight_decay},
          {"seed", t.seed},
          {"linearity_alphas", t.linearity_alphas},
          {"linearity_samples", t.linearity_samples},
          {"role_swap", t.role_swap},
          {"antisym_self_pair", t.antisym_self_pair},
          {"checkpoint_interval", t.checkpoint_interval},
          {"convergence_window", t.convergence_window},
          {"convergence_threshold", t.convergence_threshold}}},
        {"outputs", {{"history", c.history_file}}},
    };
}

namespace {

// Same JSON kind, treating every number as one kind (integers are checked on read).
bool same_kind(const json& expected, const json& actual) {
    if (expected.is_number()) return actual.is_number();
    return expected.type() == actual.type();
}

const char* kind_name(const json& j) {
    if (j.is_number_unsigned() || j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    return j.type_name();
}

// Checks `actual` against the shape of the default document `expected`.
void check_shape(const json& expected, const json& actual, const std::string& path) {
    if (!same_kind(expected, actual)) {
        throw ConfigError("config key '" + path + "' must be " + (expected.is_object() ? "an " : "a ") +
                          kind_name(expected) + ", got " + actual.type_name());
    }
    if (!expected.is_object()) return;
    for (const auto& [key, value] : actual.items()) {
        if (!expected.contains(key)) {
            throw ConfigError("unknown config key '" + (path.empty() ? key : path + "." + key) + "'");
        }
    }
    for (const auto& [key, value] : expected.items()) {
        const std::string sub = path.empty() ? key : path + "." + key;
        if (!actual.contains(key)) throw ConfigError("missing config key '" + sub + "'");
        check_shape(value, actual.at(key), sub);
    }
}

template <typename T>
T read(const json& doc, const std::string& path) {
    const json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        node = &node->at(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!node->is_number_integer() && !node->is_number_unsigned()) {
            throw ConfigError("config key '" + path + "' must be an integer");
        }
        if constexpr (std::is_unsigned_v<T>) {
            if (node->is_number_integer() && node->get<long long>() < 0) {
                throw ConfigError("config key '" + path + "' must be non-negative");
            }
        }
    }
    try {
        return node->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + path + "': " + e.what());
    }
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
    check_shape(to_json(RunConfig{}), doc, "");
    RunConfig c;
    auto& w = c.data.world;
    w.shape.style_rows = read<std::size_t>(doc, "shape.style_rows");
    w.shape.style_dim = read<std::size_t>(doc, "shape.style_dim");
    w.seed = read<std::uint64_t>(doc, "world.seed");
    w.n_classes = read<std::size_t>(doc, "world.classes");
    c.data.train_classes = read<std::size_t>(doc, "world.train_classes");
    w.n_attributes = read<std::size_t>(doc, "world.attributes");
    c.data.points = read<std::size_t>(doc, "world.points");
    const auto range = read<std::vector<double>>(doc, "world.range");
    if (range.size() != 2) throw ConfigError("config key 'world.range' must hold exactly two numbers [lo, hi]");
    w.range_lo = range[0];
    w.range_hi = range[1];
    w.curvature = read<double>(doc, "world.curvature");

    auto& t = c.train;
    t.model.d_delta = read<std::size_t>(doc, "model.d_delta");
    w.shape.d_delta = t.model.d_delta;
    t.model.decoder_hidden = read<std::size_t>(doc, "model.decoder_hidden");
    t.model.leaky_slope = read<double>(doc, "model.leaky_slope");
    t.model.dropout_p = read<double>(doc, "model.dropout");
    t.loss.lambda1 = read<double>(doc, "loss.lambda1");
    t.loss.lambda2 = read<double>(doc, "loss.lambda2");
    t.loss.lambda_antisym = read<double>(doc, "loss.lambda_antisym");
    t.loss.lambda_linear = read<double>(doc, "loss.lambda_linear");
    t.loss.lambda_orthonorm = read<double>(doc, "loss.lambda_orthonorm");
    t.noise.sigma = read<double>(doc, "noise.sigma");
    t.noise.shared_per_class = read<bool>(doc, "noise.shared_per_class");
    t.epochs = read<std::size_t>(doc, "training.epochs");
    t.lr = read<double>(doc, "training.lr");
    t.weight_decay = read<double>(doc, "training.weight_decay");
    t.decoupled_weight_decay = read<bool>(doc, "training.decoupled_weight_decay");
    t.seed = read<std::uint64_t>(doc, "training.seed");
    t.linearity_alphas = read<std::vector<int>>(doc, "training.linearity_alphas");
    t.linearity_samples = read<std::size_t>(doc, "training.linearity_samples");
    t.role_swap = read<bool>(doc, "training.role_swap");
    t.antisym_self_pair = read<bool>(doc, "training.antisym_self_pair");
    t.checkpoint_interval = read<std::size_t>(doc, "training.checkpoint_interval");
    t.convergence_window = read<std::size_t>(doc, "training.convergence_window");
    t.convergence_threshold = read<double>(doc, "training.convergence_threshold");
    c.history_file = read<std::string>(doc, "outputs.history");

    c.data.validate();
    try {
        t.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

namespace {

const std::vector<std::pair<std::string, std::string>>& key_docs() {
    static const std::vector<std::pair<std::string, std::string>> docs = {
        {"shape.style_rows", "Style rows per latent (StyleGAN2 W+ has 18)."},
        {"shape.style_dim", "Width of one style row (512 in W+)."},
        {"world.seed", "Seed of the synthetic factor-to-latent map."},
        {"world.classes", "Number of synthetic identities."},
        {"world.train_classes", "The first this-many classes are the train split; the rest are held out."},
        {"world.attributes", "Number of independently varying attributes."},
        {"world.points", "Latents per attribute sequence (at least 3)."},
        {"world.range", "Attribute range [lo, hi] sampled evenly by each sequence."},
        {"world.curvature", "Gain of the nonlinear part of the map; 0 makes attribute paths straight."},
        {"model.d_delta", "Width of the difference code and of the encoder's hidden layers."},
        {"model.decoder_hidden", "Width of the decoder's three hidden layers."},
        {"model.leaky_slope", "Negative slope of every LeakyReLU."},
        {"model.dropout", "Dropout probability after every hidden layer."},
        {"loss.lambda1", "Weight of the same-class reconstruction term."},
        {"loss.lambda2", "Weight of the other-class transfer term."},
        {"loss.lambda_antisym", "Weight of the code antisymmetry penalty."},
        {"loss.lambda_linear", "Weight of the scaled-code linearity penalty."},
        {"loss.lambda_orthonorm", "Weight of the unit-norm / cross-attribute orthogonality penalty."},
        {"noise.sigma", "Per-class noise std, in units of the per-dimension std of the train latents."},
        {"noise.shared_per_class", "One noise draw per class per step (false: one per latent)."},
        {"training.epochs", "Maximum epochs; one epoch visits every ordered pair of every train sequence."},
        {"training.lr", "Adam learning rate."},
        {"training.weight_decay", "Weight decay."},
        {"training.decoupled_weight_decay", "Apply weight decay to the parameters directly instead of the gradient."},
        {"training.seed", "Seed of initialization, pair order, noise and dropout."},
        {"training.linearity_alphas", "Integer code scales used by the linearity penalty."},
        {"training.linearity_samples", "Linearity targets drawn per step (0: all in-range targets)."},
        {"training.role_swap", "Alternate which class is the reference and both pair orders."},
        {"training.antisym_self_pair", "Also push the code of a latent paired with itself toward zero."},
        {"training.checkpoint_interval", "Epochs between periodic checkpoints (0: final checkpoint only)."},
        {"training.convergence_window", "Window (epochs) of the plateau test (0 disables early stopping)."},
        {"training.convergence_threshold", "Stop when the windowed mean loss improves by less than this fraction."},
        {"outputs.history", "Per-epoch loss CSV, relative to the checkpoint's directory unless absolute."},
    };
    return docs;
}

}  // namespace

std::string config_reference() {
    const json defaults = to_json(RunConfig{});
    std::ostringstream out;
    out << "# Run configuration reference\n\n"
        << "Generated by `dge config-reference`. `dge train --config` requires every key below and\n"
        << "rejects any other key. `dge config-template` prints the defaults as a ready-to-edit file.\n\n"
        << "| key | type | default | meaning |\n|---|---|---|---|\n";
    for (const auto& [key, text] : key_docs()) {
        const json value = defaults.at(json::json_pointer("/" + [&] {
            std::string p = key;
            for (char& ch : p) {
                if (ch == '.') ch = '/';
            }
            return p;
        }()));
        out << "| `" << key << "` | " << kind_name(value) << " | `" << value.dump() << "` | " << text << " |\n";
    }
    return out.str();
}

}  // namespace dge::cli
