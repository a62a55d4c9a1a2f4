#include "dge/cli/dataset_io.hpp"

#include "dge/cli/latent_file.hpp"
#include "dge/errors.hpp"
#include "dge/trainer/checkpoint.hpp"

#include <numeric>

namespace dge::cli {

using nlohmann::json;

synth::OracleWorld world_of(const WorldSettings& settings) {
    settings.validate();
    return synth::OracleWorld(settings.world);
}

namespace {

std::string sequence_file(const synth::AttributeSequence& s) {
    return "class" + std::to_string(s.class_id) + "_attr" + std::to_string(s.attribute_id) + ".dlat";
}

json settings_json(const WorldSettings& s) {
    const auto& w = s.world;
    return json{{"seed", w.seed},
                {"classes", w.n_classes},
                {"train_classes", s.train_classes},
                {"attributes", w.n_attributes},
                {"points", s.points},
                {"range", {w.range_lo, w.range_hi}},
                {"curvature", w.curvature},
                {"style_rows", w.shape.style_rows},
                {"style_dim", w.shape.style_dim}};
}

WorldSettings settings_from_json(const json& j) {
    WorldSettings s;
    auto& w = s.world;
    w.seed = j.at("seed").get<std::uint64_t>();
    w.n_classes = j.at("classes").get<std::size_t>();
    s.train_classes = j.at("train_classes").get<std::size_t>();
    w.n_attributes = j.at("attributes").get<std::size_t>();
    s.points = j.at("points").get<std::size_t>();
    w.range_lo = j.at("range").at(0).get<double>();
    w.range_hi = j.at("range").at(1).get<double>();
    w.curvature = j.at("curvature").get<double>();
    w.shape.style_rows = j.at("style_rows").get<std::size_t>();
    w.shape.style_dim = j.at("style_dim").get<std::size_t>();
    return s;
}

}  // namespace

StoredDataset write_dataset(const std::filesystem::path& dir, const WorldSettings& settings) {
    const synth::OracleWorld world = world_of(settings);
    std::vector<std::size_t> train(settings.train_classes);
    std::iota(train.begin(), train.end(), 0);
    std::vector<std::size_t> heldout(settings.world.n_classes - settings.train_classes);
    std::iota(heldout.begin(), heldout.end(), settings.train_classes);
    const auto t = synth::linspace(settings.world.range_lo, settings.world.range_hi, settings.points);

    StoredDataset out;
    out.settings = settings;
    out.dataset = synth::build_dataset(world, train, heldout, t);

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    json seqs = json::array();
    for (auto& s : out.dataset.sequences) {
        for (auto& l : s.latents) l = round_to_f32(l);
        const std::string name = sequence_file(s);
        write_latent_file(dir / name, {settings.world.shape.style_rows, settings.world.shape.style_dim, s.latents});
        out.files.push_back(name);
        seqs.push_back({{"file", name},
                        {"class_id", s.class_id},
                        {"attribute_id", s.attribute_id},
                        {"split", out.dataset.split_of(s.class_id) == synth::Split::train ? "train" : "heldout"},
                        {"attribute_values", s.attribute_values}});
    }
    const json manifest{{"format", "dge-dataset"},
                        {"version", 1},
                        {"world", settings_json(settings)},
                        {"train_classes", train},
                        {"heldout_classes", heldout},
                        {"sequences", seqs}};
    const std::string text = manifest.dump(2) + "\n";
    trainer::write_file_atomic(dir / kManifestName, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    return out;
}

StoredDataset read_dataset(const std::filesystem::path& dir) {
    const auto bytes = trainer::read_file(dir / kManifestName);
    StoredDataset out;
    try {
        const json m = json::parse(bytes.begin(), bytes.end());
        if (m.at("format") != "dge-dataset") throw FormatError("manifest: unexpected format tag");
        if (m.at("version") != 1) throw FormatError("manifest: unsupported version");
        out.settings = settings_from_json(m.at("world"));
        auto& ds = out.dataset;
        ds.world_config = out.settings.world;
        ds.train_classes = m.at("train_classes").get<std::vector<std::size_t>>();
        ds.heldout_classes = m.at("heldout_classes").get<std::vector<std::size_t>>();
        for (const auto& s : m.at("sequences")) {
            synth::AttributeSequence seq;
            seq.class_id = s.at("class_id").get<std::size_t>();
            seq.attribute_id = s.at("attribute_id").get<std::size_t>();
            seq.attribute_values = s.at("attribute_values").get<std::vector<double>>();
            const auto name = s.at("file").get<std::string>();
            const LatentFile file = read_latent_file(dir / name);
            if (file.style_rows != out.settings.world.shape.style_rows ||
                file.style_dim != out.settings.world.shape.style_dim) {
                throw FormatError(name + ": latent shape differs from the manifest");
            }
            if (file.latents.size() != seq.attribute_values.size()) {
                throw FormatError(name + ": " + std::to_string(file.latents.size()) + " latents but " +
                                  std::to_string(seq.attribute_values.size()) + " attribute values");
            }
            seq.latents = file.latents;
            ds.sequences.push_back(std::move(seq));
            out.files.push_back(name);
        }
        out.settings.validate();
        ds.validate();
    } catch (const json::exception& e) {
        throw FormatError((dir / kManifestName).string() + ": " + e.what());
    } catch (const InvalidInput& e) {
        throw FormatError((dir / kManifestName).string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError((dir / kManifestName).string() + ": " + e.what());
    }
    return out;
}

}  // namespace dge::cli
