#include "doctest.h"

#include "dge/cli/commands.hpp"
#include "dge/cli/dataset_io.hpp"
#include "dge/cli/latent_file.hpp"
#include "dge/cli/run_config.hpp"
#include "dge/errors.hpp"
#include "dge/eval/csv.hpp"
#include "dge/trainer/checkpoint.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dge;
using namespace dge::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result dge_run(std::vector<std::string> args) {
    args.insert(args.begin(), "dge");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dge_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

// Small world so the command tests stay fast.
std::vector<std::string> small_gen_args(const fs::path& out) {
    return {"gen-data", "--seed", "3", "--classes", "3", "--train-classes", "2", "--points", "5",
            "--style-rows", "2", "--style-dim", "8", "--out", out.string()};
}

json small_config() {
    RunConfig cfg;
    cfg.data.world.seed = 3;
    cfg.data.world.n_classes = 3;
    cfg.data.points = 5;
    cfg.data.world.shape = {2, 8, 4};
    cfg.train.model.d_delta = 4;
    cfg.train.model.decoder_hidden = 12;
    cfg.train.epochs = 3;
    return to_json(cfg);
}

// gen-data plus a config file, shared by the train/edit/eval tests.
struct Workspace {
    fs::path dir, data, config;
};

Workspace small_workspace(const std::string& name) {
    Workspace w;
    w.dir = fresh_dir(name);
    w.data = w.dir / "data";
    w.config = w.dir / "run.json";
    REQUIRE(dge_run(small_gen_args(w.data)).code == kExitOk);
    spit(w.config, small_config().dump(2));
    return w;
}

}  // namespace

TEST_CASE("latent files") {
    LatentFile f{2, 3, {}};
    f.latents.push_back({{1.0, -2.5, 0.1, 3.0, 4.0, 5.0}});
    f.latents.push_back({{0.0, 1e-3, -1e6, 7.0, 8.0, 9.0}});
    const auto bytes = encode_latent_file(f);
    CHECK(bytes.size() == 4 + 4 * 4 + 2 * 6 * 4 + 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DLAT");

    const auto back = decode_latent_file(bytes);
    CHECK(back.style_rows == 2);
    CHECK(back.style_dim == 3);
    REQUIRE(back.latents.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) CHECK(back.latents[k] == round_to_f32(f.latents[k]));
    CHECK(encode_latent_file(back) == bytes);

    SUBCASE("corruption") {
        auto b = bytes;
        b[10] ^= 1;
        CHECK_THROWS_AS(decode_latent_file(b), FormatError);
        b = bytes;
        b.resize(b.size() - 5);
        CHECK_THROWS_AS(decode_latent_file(b), FormatError);
        b = bytes;
        b[1] = 'X';
        CHECK_THROWS_AS(decode_latent_file(b), FormatError);
        b = bytes;
        b.resize(b.size() - 4);
        b[4] = 9;
        trainer::put_u32(b, trainer::crc32(b));
        CHECK_THROWS_AS(decode_latent_file(b), FormatError);
    }
    SUBCASE("wrong latent length") {
        LatentFile bad{2, 3, {{{1.0, 2.0}}}};
        CHECK_THROWS_AS(encode_latent_file(bad), DimensionError);
    }
}

TEST_CASE("gen-data") {
    const fs::path dir = fresh_dir("gen");
    const auto r = dge_run({"gen-data", "--points", "11", "--range", "-30", "30", "--out", (dir / "a").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(json::parse(r.out).at("sequences") == 8);

    const auto stored = read_dataset(dir / "a");
    CHECK(stored.dataset.sequences.size() == 8);
    for (const auto& s : stored.dataset.sequences) {
        REQUIRE(s.size() == 11);
        for (std::size_t k = 0; k < 11; ++k) CHECK(s.attribute_values[k] == doctest::Approx(-30.0 + 6.0 * k));
    }
    const json manifest = json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest.at("train_classes") == json::array({0, 1}));
    CHECK(manifest.at("heldout_classes") == json::array({2, 3}));

    SUBCASE("the stored latents are the oracle's, rounded to floats") {
        const auto world = world_of(stored.settings);
        const auto& s = stored.dataset.sequences[3];
        CHECK(s.latents[4] == round_to_f32(world.map_single(s.class_id, s.attribute_id, s.attribute_values[4])));
    }
    SUBCASE("rerun is byte-identical") {
        REQUIRE(dge_run({"gen-data", "--points", "11", "--out", (dir / "b").string()}).code == kExitOk);
        std::size_t compared = 0;
        for (const auto& entry : fs::directory_iterator(dir / "a")) {
            CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
            ++compared;
        }
        CHECK(compared == 9);
    }
    SUBCASE("bad arguments exit 2 with usage") {
        auto bad = dge_run({"gen-data", "--points", "2", "--out", (dir / "c").string()});
        CHECK(bad.code == kExitUsage);
        CHECK(bad.err.find("points") != std::string::npos);
        bad = dge_run({"gen-data", "--points", "many", "--out", (dir / "c").string()});
        CHECK(bad.code == kExitUsage);
        CHECK(bad.err.find("Usage") != std::string::npos);
        CHECK(dge_run({"gen-data", "--train-classes", "4", "--out", (dir / "c").string()}).code == kExitUsage);
        CHECK(dge_run({"gen-data", "--range", "5", "1", "--out", (dir / "c").string()}).code == kExitUsage);
        CHECK(dge_run({"frobnicate"}).code == kExitUsage);
        CHECK(dge_run({}).code == kExitUsage);
    }
    SUBCASE("unwritable output exits 1") {
        spit(dir / "file", "x");
        CHECK(dge_run({"gen-data", "--out", (dir / "file" / "sub").string()}).code == kExitFailure);
    }
}

TEST_CASE("corrupt dataset files are reported") {
    const auto w = small_workspace("corrupt_data");
    const fs::path victim = w.data / "class0_attr0.dlat";
    auto bytes = trainer::read_file(victim);
    bytes[30] ^= 0xFF;
    trainer::write_file_atomic(victim, bytes);
    CHECK_THROWS_AS(read_dataset(w.data), FormatError);
}

TEST_CASE("run configuration") {
    const json doc = to_json(RunConfig{});
    CHECK(parse_run_config(doc) == RunConfig{});

    SUBCASE("template printed by the tool parses to the defaults") {
        const auto r = dge_run({"config-template"});
        REQUIRE(r.code == kExitOk);
        CHECK(parse_run_config(json::parse(r.out)) == RunConfig{});
    }
    SUBCASE("missing key") {
        json d = doc;
        d["training"].erase("lr");
        try {
            parse_run_config(d);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("training.lr") != std::string::npos);
        }
    }
    SUBCASE("unknown key") {
        json d = doc;
        d["loss"]["lambda3"] = 1.0;
        CHECK_THROWS_WITH_AS(parse_run_config(d), doctest::Contains("loss.lambda3"), ConfigError);
        d = doc;
        d["extra"] = json::object();
        CHECK_THROWS_AS(parse_run_config(d), ConfigError);
    }
    SUBCASE("wrong types and values") {
        json d = doc;
        d["training"]["epochs"] = "many";
        CHECK_THROWS_WITH_AS(parse_run_config(d), doctest::Contains("training.epochs"), ConfigError);
        d = doc;
        d["training"]["epochs"] = -5;
        CHECK_THROWS_AS(parse_run_config(d), ConfigError);
        d = doc;
        d["noise"]["sigma"] = -1.0;
        CHECK_THROWS_AS(parse_run_config(d), ConfigError);
        d = doc;
        d["model"]["dropout"] = 1.0;
        CHECK_THROWS_AS(parse_run_config(d), ConfigError);
    }
    SUBCASE("every key round-trips") {
        RunConfig c;
        c.train.epochs = 77;
        c.train.lr = 3e-4;
        c.train.loss.lambda_antisym = 0.5;
        c.train.noise.shared_per_class = false;
        c.train.linearity_alphas = {1, 3};
        c.data.world.range_lo = -10;
        c.data.world.curvature = 0.5;
        c.history_file = "h.csv";
        CHECK(parse_run_config(json::parse(to_json(c).dump())) == c);
    }
    SUBCASE("the reference lists every key") {
        const std::string ref = config_reference();
        for (const auto& [section, body] : doc.items()) {
            for (const auto& [key, value] : body.items()) {
                CHECK_MESSAGE(ref.find("`" + section + "." + key + "`") != std::string::npos, std::string(section + "." + key));
            }
        }
    }
    SUBCASE("the checked-in reference is current") {
        CHECK(slurp(fs::path(DGE_SOURCE_DIR) / "docs" / "config_reference.md") == config_reference());
    }
}

TEST_CASE("train") {
    const auto w = small_workspace("train");
    const fs::path ck = w.dir / "model.dgec";

    SUBCASE("one epoch writes one history row") {
        const auto r = dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out",
                                ck.string(), "--epochs", "1"});
        REQUIRE(r.code == kExitOk);
        const json summary = json::parse(r.out);
        CHECK(summary.at("epochs") == 1);
        for (const char* k : {"total", "identity", "transfer", "antisym", "linear", "orthonorm"}) {
            CHECK(std::isfinite(summary.at(k).get<double>()));
        }
        const auto history = eval::parse_csv(slurp(w.dir / "history.csv"));
        CHECK(history.header ==
              std::vector<std::string>{"epoch", "total", "identity", "transfer", "antisym", "linear", "orthonorm"});
        CHECK(history.rows.size() == 1);
        CHECK(trainer::load_checkpoint(ck).state.history.records.size() == 1);
    }
    SUBCASE("resume continues the same run") {
        REQUIRE(dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string(),
                         "--epochs", "2"})
                    .code == kExitOk);
        REQUIRE(dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string(),
                         "--epochs", "4", "--resume"})
                    .code == kExitOk);
        const fs::path straight = w.dir / "straight.dgec";
        REQUIRE(dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out",
                         straight.string(), "--epochs", "4"})
                    .code == kExitOk);
        CHECK(trainer::load_checkpoint(ck).state == trainer::load_checkpoint(straight).state);
        CHECK(eval::parse_csv(slurp(w.dir / "history.csv")).rows.size() == 4);
    }
    SUBCASE("missing config key exits 2 naming it") {
        json d = small_config();
        d["noise"].erase("sigma");
        spit(w.config, d.dump());
        const auto r = dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string()});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("noise.sigma") != std::string::npos);
        CHECK_FALSE(fs::exists(ck));
    }
    SUBCASE("malformed JSON exits 2") {
        spit(w.config, "{ not json");
        CHECK(dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string()})
                  .code == kExitUsage);
    }
    SUBCASE("config that disagrees with the data exits 2") {
        json d = small_config();
        d["world"]["seed"] = 4;
        spit(w.config, d.dump());
        const auto r = dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string()});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("world.seed") != std::string::npos);
    }
    SUBCASE("non-finite loss exits 1 naming the component") {
        json d = small_config();
        d["training"]["lr"] = 1e300;
        spit(w.config, d.dump());
        const auto r = dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string()});
        CHECK(r.code == kExitFailure);
        CHECK(r.err.find("non-finite") != std::string::npos);
    }
    SUBCASE("missing data directory exits 1") {
        CHECK(dge_run({"train", "--config", w.config.string(), "--data", (w.dir / "nope").string(), "--out",
                       ck.string()})
                  .code == kExitFailure);
    }
}

TEST_CASE("edit") {
    const auto w = small_workspace("edit");
    const fs::path ck = w.dir / "model.dgec";
    REQUIRE(dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string()}).code ==
            kExitOk);
    const std::string a = (w.data / "class0_attr0.dlat").string();
    const std::string b = (w.data / "class2_attr0.dlat").string();
    const fs::path out = w.dir / "edited.dlat";

    SUBCASE("alpha 1 matches the library bit for bit") {
        const auto r = dge_run({"edit", "--checkpoint", ck.string(), "--base", b + ":1", "--ref-pair", a + ":0",
                                a + ":3", "--alpha", "1", "--out", out.string()});
        REQUIRE(r.code == kExitOk);
        const auto params = trainer::load_checkpoint(ck).state.params;
        const auto fa = read_latent_file(a), fb = read_latent_file(b);
        numkit::Rng unused(0);
        const auto delta = model::encode(params, fa.latents[0], fa.latents[3], unused, false);
        const auto expect = model::decode_edit(params, fb.latents[1], delta, 1.0, unused, false);
        const auto got = read_latent_file(out);
        REQUIRE(got.latents.size() == 1);
        CHECK(got.latents[0] == round_to_f32(expect));
        CHECK(json::parse(r.out).at("delta").get<std::vector<double>>() == delta.values);
    }
    SUBCASE("zeroed decoder, alpha 0 returns the base") {
        auto loaded = trainer::load_checkpoint(ck);
        model::zero_decoder_output(loaded.state.params);
        const fs::path zero = w.dir / "zero.dgec";
        trainer::save_checkpoint(loaded.state, loaded.config, zero);
        REQUIRE(dge_run({"edit", "--checkpoint", zero.string(), "--base", b + ":2", "--ref-pair", a + ":0", a + ":4",
                         "--alpha", "0", "--out", out.string()})
                    .code == kExitOk);
        CHECK(read_latent_file(out).latents[0] == read_latent_file(b).latents[2]);
    }
    SUBCASE("bad references") {
        CHECK(dge_run({"edit", "--checkpoint", ck.string(), "--base", b + ":9", "--ref-pair", a + ":0", a + ":1",
                       "--out", out.string()})
                  .code == kExitFailure);
        CHECK(dge_run({"edit", "--checkpoint", ck.string(), "--base", b, "--ref-pair", a + ":0", a + ":1", "--out",
                       out.string()})
                  .code == kExitUsage);
        write_latent_file(w.dir / "wide.dlat", {1, 3, {{{1.0, 2.0, 3.0}}}});
        CHECK(dge_run({"edit", "--checkpoint", ck.string(), "--base", (w.dir / "wide.dlat").string() + ":0",
                       "--ref-pair", a + ":0", a + ":1", "--out", out.string()})
                  .code == kExitFailure);
        CHECK_FALSE(fs::exists(out));
    }
}

TEST_CASE("eval") {
    const auto w = small_workspace("eval");
    const fs::path ck = w.dir / "model.dgec";
    REQUIRE(dge_run({"train", "--config", w.config.string(), "--data", w.data.string(), "--out", ck.string()}).code ==
            kExitOk);
    const fs::path plain = w.dir / "plain", both = w.dir / "both";
    const auto r1 = dge_run({"eval", "--checkpoint", ck.string(), "--data", w.data.string(), "--report",
                             plain.string(), "--trials", "60"});
    REQUIRE(r1.code == kExitOk);
    const auto r2 = dge_run({"eval", "--checkpoint", ck.string(), "--data", w.data.string(), "--report",
                             both.string(), "--trials", "60", "--baseline", "linear"});
    REQUIRE(r2.code == kExitOk);

    const std::map<std::string, std::vector<std::string>> headers{
        {"error_stats.csv",
         {"trial", "class_id", "attribute_id", "base_index", "base_value", "target_change", "ref_class", "ref_i",
          "ref_j", "alpha", "recovered", "error"}},
        {"identity_scores.csv", {"path", "class_id", "attribute_id", "ref_class", "identity_score", "nonlinearity"}},
        {"paths_pca.csv", {"path", "point", "alpha", "pc1", "pc2"}},
        {"delta_overlap.csv", {"attribute_id", "steps", "delta_distance", "latent_distance"}},
    };
    const std::map<std::string, std::vector<std::string>> groups{
        {"error_stats.csv", {"linear_recovered", "linear_error"}},
        {"identity_scores.csv", {"linear_identity_score", "linear_nonlinearity"}},
        {"paths_pca.csv", {"linear_pc1", "linear_pc2"}},
        {"delta_overlap.csv", {"linear_delta_distance"}},
    };
    for (const auto& [file, header] : headers) {
        const auto a = eval::parse_csv(slurp(plain / file));
        const auto b = eval::parse_csv(slurp(both / file));
        CHECK(a.header == header);
        auto extended = header;
        extended.insert(extended.end(), groups.at(file).begin(), groups.at(file).end());
        CHECK(b.header == extended);
        CHECK(a.rows.size() == b.rows.size());
        CHECK(a.rows.size() > 0);
        for (std::size_t r = 0; r < a.rows.size(); ++r) {
            CHECK(std::vector<std::string>(b.rows[r].begin(), b.rows[r].begin() + header.size()) == a.rows[r]);
        }
    }
    CHECK(eval::parse_csv(slurp(plain / "error_stats.csv")).rows.size() == 60);

    SUBCASE("summary re-aggregates from the rows") {
        const auto t = eval::parse_csv(slurp(both / "error_stats.csv"));
        auto stats = [&](const std::string& column) {
            std::vector<double> v;
            for (const auto& row : t.rows) v.push_back(std::stod(row[t.column(column)]));
            double m = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - m) * (x - m);
            return std::pair{m, std::sqrt(var / static_cast<double>(v.size()))};
        };
        const auto [m_model, s_model] = stats("error");
        const auto [m_lin, s_lin] = stats("linear_error");
        std::istringstream lines(r2.out);
        std::string line;
        std::map<std::string, std::pair<double, double>> summary;
        std::getline(lines, line);
        CHECK(line.find("linear") != std::string::npos);
        while (std::getline(lines, line)) {
            std::istringstream fields(line);
            std::string name;
            double model = 0.0, linear = 0.0;
            fields >> name >> model >> linear;
            summary[name] = {model, linear};
        }
        CHECK(summary.at("magnitude_error_mean").first == doctest::Approx(m_model).epsilon(1e-6));
        CHECK(summary.at("magnitude_error_std").first == doctest::Approx(s_model).epsilon(1e-6));
        CHECK(summary.at("magnitude_error_mean").second == doctest::Approx(m_lin).epsilon(1e-6));
        CHECK(summary.at("magnitude_error_std").second == doctest::Approx(s_lin).epsilon(1e-6));
        CHECK(summary.size() == 6);
    }
    SUBCASE("same seed, same report") {
        const fs::path again = w.dir / "again";
        REQUIRE(dge_run({"eval", "--checkpoint", ck.string(), "--data", w.data.string(), "--report", again.string(),
                         "--trials", "60"})
                    .code == kExitOk);
        for (const auto& [file, header] : headers) CHECK(slurp(again / file) == slurp(plain / file));
    }
    SUBCASE("shape mismatch and bad options") {
        const fs::path other = w.dir / "other";
        REQUIRE(dge_run({"gen-data", "--style-rows", "4", "--style-dim", "8", "--points", "5", "--out",
                         other.string()})
                    .code == kExitOk);
        const auto r = dge_run({"eval", "--checkpoint", ck.string(), "--data", other.string(), "--report",
                                (w.dir / "x").string()});
        CHECK(r.code == kExitFailure);
        CHECK(dge_run({"eval", "--checkpoint", ck.string(), "--data", w.data.string(), "--report",
                       (w.dir / "x").string(), "--baseline", "cubic"})
                  .code == kExitUsage);
    }
}

TEST_CASE("help") {
    const auto r = dge_run({"--help"});
    CHECK(r.code == kExitOk);
    for (const char* cmd : {"gen-data", "train", "edit", "eval", "config-template", "config-reference"}) {
        CHECK(r.out.find(cmd) != std::string::npos);
    }
}
