#include "doctest.h"

#include "dge/errors.hpp"
#include "dge/trainer/checkpoint.hpp"
#include "dge/trainer/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace dge;
using namespace dge::trainer;
namespace fs = std::filesystem;

namespace {

synth::WorldConfig small_world() {
    synth::WorldConfig w;
    w.shape = {2, 8, 4};
    w.n_classes = 3;
    return w;
}

synth::Dataset small_dataset(std::size_t points = 5) {
    static const synth::OracleWorld world(small_world());
    const std::size_t train[] = {0, 1}, held[] = {2};
    return synth::build_dataset(world, train, held, synth::linspace(-30, 30, points));
}

TrainConfig small_config() {
    TrainConfig c;
    c.model.d_delta = 4;
    c.model.decoder_hidden = 12;
    c.epochs = 3;
    c.convergence_window = 0;
    return c;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("dge_trainer_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("noise-free batches carry the raw latents") {
    const auto ds = small_dataset();
    BatchOptions opts;
    opts.noise.sigma = 0.0;
    Rng rng(1);
    const Vector scale = dimension_std(ds);
    for (int t = 0; t < 50; ++t) {
        const auto b = make_batch(ds, rng, opts, scale);
        const auto& sa = ds.sequences[b.seq_a];
        const auto& sb = ds.sequences[b.seq_b];
        CHECK(b.i != b.j);
        CHECK(b.class_a != b.class_b);
        CHECK(sa.attribute_id == sb.attribute_id);
        CHECK(b.sample.a_i == sa.latents[b.i]);
        CHECK(b.sample.a_j == sa.latents[b.j]);
        CHECK(b.sample.b_i == sb.latents[b.i]);
        CHECK(b.sample.b_j == sb.latents[b.j]);
        for (std::size_t r = 0; r < b.linearity.size(); ++r) {
            const auto& info = b.linearity_info[r];
            CHECK(b.linearity[r].base == sa.latents[info.base_index]);
            CHECK(b.linearity[r].target == sa.latents[info.target_index]);
            CHECK(static_cast<long>(info.target_index) ==
                  static_cast<long>(info.base_index) + info.alpha * (static_cast<long>(b.j) - static_cast<long>(b.i)));
        }
    }
}

TEST_CASE("shared noise cancels in within-class differences") {
    const auto ds = small_dataset();
    BatchOptions opts;
    opts.noise.sigma = 1.5;
    Rng rng(2);
    const Vector scale = dimension_std(ds);
    for (int t = 0; t < 50; ++t) {
        const auto b = make_batch(ds, rng, opts, scale);
        const auto& sa = ds.sequences[b.seq_a];
        const auto& sb = ds.sequences[b.seq_b];
        CHECK_FALSE(b.sample.a_i == sa.latents[b.i]);
        for (std::size_t d = 0; d < scale.size(); ++d) {
            const double raw_a = sa.latents[b.j].values[d] - sa.latents[b.i].values[d];
            const double raw_b = sb.latents[b.j].values[d] - sb.latents[b.i].values[d];
            CHECK(b.sample.a_j.values[d] - b.sample.a_i.values[d] == doctest::Approx(raw_a).epsilon(1e-12));
            CHECK(b.sample.b_j.values[d] - b.sample.b_i.values[d] == doctest::Approx(raw_b).epsilon(1e-12));
        }
    }
}

TEST_CASE("ordered pairs occur in both orders equally often") {
    const auto ds = small_dataset();
    BatchOptions opts;
    opts.noise.sigma = 0.0;
    opts.linearity_samples = 1;
    Rng rng(3);
    const Vector scale = dimension_std(ds);
    std::map<std::pair<std::size_t, std::size_t>, int> counts;
    std::map<std::size_t, int> a_class;
    const int draws = 10000;
    int forward = 0;
    for (int t = 0; t < draws; ++t) {
        const auto b = make_batch(ds, rng, opts, scale);
        ++counts[{b.i, b.j}];
        ++a_class[b.class_a];
        if (b.i < b.j) ++forward;
    }
    CHECK(counts.size() == 20);
    const int backward = draws - forward;
    CHECK(std::abs(forward - backward) <= 0.05 * std::max(forward, backward));
    CHECK(std::abs(a_class[0] - a_class[1]) <= 0.05 * draws / 2);
}

TEST_CASE("swapping the A and B roles leaves the mean loss unchanged") {
    const auto ds = small_dataset();
    const TrainConfig cfg = small_config();
    const auto st = init_train_state(ds, cfg);
    BatchOptions opts = batch_options(cfg);
    Rng rng(4);
    const Vector scale = dimension_std(ds);
    double direct = 0.0, swapped = 0.0;
    const int draws = 4000;
    for (int t = 0; t < draws; ++t) {
        const auto b = make_batch(ds, rng, opts, scale);
        Rng r(0);
        direct += model::residual_loss(st.params, b.sample, cfg.loss, r, false).value;
        const model::ResidualSample s{b.sample.b_i, b.sample.b_j, b.sample.a_i, b.sample.a_j};
        swapped += model::residual_loss(st.params, s, cfg.loss, r, false).value;
    }
    CHECK(std::abs(direct - swapped) <= 0.05 * direct);
}

TEST_CASE("zero loss weights leave the parameters unchanged") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    cfg.weight_decay = 0.0;
    auto st = init_train_state(ds, cfg);
    const auto before = st.params;
    cfg.loss = {0.0, 0.0, 0.0, 0.0, 0.0};
    train_epoch(st, ds, cfg);
    CHECK(st.params == before);
    CHECK(st.history.records.size() == 1);
    CHECK(st.history.records[0].total == 0.0);
}

TEST_CASE("training records one finite row per epoch") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    cfg.epochs = 1;
    const auto one = train(ds, cfg);
    CHECK(one.history.records.size() == 1);

    cfg.epochs = 4;
    const auto st = train(ds, cfg);
    REQUIRE(st.history.records.size() == 4);
    for (const auto& r : st.history.records) {
        for (double v : {r.total, r.identity, r.transfer, r.antisym, r.linear, r.orthonorm}) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
        }
        CHECK(r.total == doctest::Approx(r.identity + r.transfer + 0.1 * r.antisym + r.linear + 0.01 * r.orthonorm));
    }
}

TEST_CASE("same seed, same run") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    const auto a = train(ds, cfg);
    const auto b = train(ds, cfg);
    CHECK(a == b);
    cfg.seed = 2;
    CHECK_FALSE(train(ds, cfg).params == a.params);
}

TEST_CASE("early stopping on a plateau") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    cfg.epochs = 50;
    cfg.convergence_window = 2;
    cfg.convergence_threshold = 0.99;
    const auto st = train(ds, cfg);
    CHECK(st.converged);
    CHECK(st.history.records.size() == 4);
}

TEST_CASE("non-finite losses abort naming the component") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    auto st = init_train_state(ds, cfg);
    for (double& w : st.params.decoder.weights.back().span()) w = 1e300;
    try {
        train_epoch(st, ds, cfg);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("loss at epoch 0") != std::string::npos);
    }
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = TrainConfig{};
    cfg.noise.sigma = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = TrainConfig{};
    cfg.loss.lambda1 = cfg.loss.lambda2 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("crc32 check value") {
    const std::string s = "123456789";
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    CHECK(crc32(bytes) == 0xCBF43926u);
}

TEST_CASE("checkpoint round trip") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    cfg.noise.sigma = 0.25;
    cfg.linearity_alphas = {1, 2};
    const auto st = train(ds, cfg);
    const fs::path dir = scratch_dir("roundtrip");
    const fs::path path = dir / "model.dgec";
    save_checkpoint(st, cfg, path);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.state == st);
    CHECK(loaded.config == cfg);
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));

    // Saving the loaded state reproduces the file byte for byte.
    const fs::path again = dir / "again.dgec";
    save_checkpoint(loaded.state, loaded.config, again);
    CHECK(read_file(path) == read_file(again));
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto ds = small_dataset();
    const TrainConfig cfg = small_config();
    const auto st = init_train_state(ds, cfg);
    const fs::path dir = scratch_dir("corrupt");
    const fs::path path = dir / "model.dgec";
    save_checkpoint(st, cfg, path);
    const auto bytes = read_file(path);

    auto write = [&](const std::vector<std::uint8_t>& b) {
        const fs::path p = dir / "bad.dgec";
        write_file_atomic(p, b);
        return p;
    };
    SUBCASE("truncated") {
        auto b = bytes;
        b.resize(b.size() / 2);
        CHECK_THROWS_AS(load_checkpoint(write(b)), FormatError);
    }
    SUBCASE("flipped parameter byte") {
        auto b = bytes;
        b[b.size() - 40] ^= 0x10;
        CHECK_THROWS_AS(load_checkpoint(write(b)), FormatError);
    }
    SUBCASE("wrong magic") {
        auto b = bytes;
        b[0] = 'X';
        CHECK_THROWS_AS(load_checkpoint(write(b)), FormatError);
    }
    SUBCASE("future version with a valid checksum") {
        auto b = bytes;
        b.resize(b.size() - 4);
        b[4] = 2;
        put_u32(b, crc32(b));
        try {
            load_checkpoint(write(b));
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir / "absent.dgec"), IoError);
    }
}

TEST_CASE("resuming from a checkpoint equals an uninterrupted run") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    cfg.epochs = 10;
    const auto full = train(ds, cfg);

    const fs::path path = scratch_dir("resume") / "half.dgec";
    TrainConfig first = cfg;
    first.epochs = 5;
    first.checkpoint_path = path.string();
    train(ds, first);
    auto loaded = load_checkpoint(path);
    const auto resumed = train(ds, cfg, std::move(loaded.state));
    CHECK(resumed == full);
}

TEST_CASE("periodic checkpoints") {
    const auto ds = small_dataset();
    TrainConfig cfg = small_config();
    cfg.epochs = 4;
    cfg.checkpoint_interval = 2;
    const fs::path path = scratch_dir("periodic") / "run.dgec";
    cfg.checkpoint_path = path.string();
    int seen = 0;
    train(ds, cfg, std::nullopt, [&](const TrainState& s) {
        if (s.history.records.size() == 3) {
            CHECK(load_checkpoint(path).state.history.records.size() == 2);
            ++seen;
        }
    });
    CHECK(seen == 1);
    CHECK(load_checkpoint(path).state.history.records.size() == 4);
}

TEST_CASE("desk training: the 100-epoch moving average of the total loss decreases") {
    const synth::OracleWorld world{synth::WorldConfig{}};
    const std::size_t train_classes[] = {0, 1}, held[] = {2, 3};
    const auto ds = synth::build_dataset(world, train_classes, held, synth::linspace(-30, 30, 11));
    TrainConfig config;
    config.epochs = 500;
    config.convergence_window = 0;
    const auto state = train(ds, config);
    const auto& records = state.history.records;
    REQUIRE(records.size() == 500);
    std::vector<double> window_means;
    for (std::size_t start = 0; start < 500; start += 100) {
        double sum = 0.0;
        for (std::size_t e = start; e < start + 100; ++e) sum += records[e].total;
        window_means.push_back(sum / 100.0);
    }
    for (std::size_t w = 1; w < window_means.size(); ++w) CHECK(window_means[w] < window_means[w - 1]);
}
