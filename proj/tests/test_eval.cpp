#include "doctest.h"

#include "dge/errors.hpp"
#include "dge/eval/csv.hpp"
#include "dge/eval/eval.hpp"

#include <cmath>
#include <numeric>

using namespace dge;
using namespace dge::eval;

namespace {

const synth::OracleWorld& world() {
    static const synth::OracleWorld w{synth::WorldConfig{}};
    return w;
}

const synth::Dataset& dataset() {
    static const synth::Dataset ds = [] {
        const std::size_t train[] = {0, 1}, held[] = {2, 3};
        return synth::build_dataset(world(), train, held, synth::linspace(-30, 30, 11));
    }();
    return ds;
}

LatentVector lv(std::initializer_list<double> v) { return LatentVector{Vector(v)}; }

}  // namespace

TEST_CASE("linear baseline edit") {
    const auto a_i = lv({1, 2}), a_j = lv({3, -2}), b_i = lv({0.5, 0.5});
    CHECK(linear_baseline_edit(a_i, a_j, b_i, 0.0) == b_i);
    CHECK(linear_baseline_edit(a_i, a_j, a_i, 1.0) == a_j);
    CHECK(linear_baseline_edit(a_i, a_j, b_i, 0.5) == lv({1.5, -1.5}));
    CHECK_THROWS_AS(linear_baseline_edit(a_i, lv({1, 2, 3}), b_i, 1.0), DimensionError);

    // Affine in alpha.
    const auto e1 = linear_baseline_edit(a_i, a_j, b_i, 0.25), e2 = linear_baseline_edit(a_i, a_j, b_i, 1.75),
               mid = linear_baseline_edit(a_i, a_j, b_i, 1.0);
    for (std::size_t d = 0; d < 2; ++d) CHECK(e1.values[d] + e2.values[d] - 2.0 * mid.values[d] == 0.0);
}

TEST_CASE("cosine similarity") {
    const Vector u{1, 2, -1};
    CHECK(cosine_similarity(u, u) == doctest::Approx(1.0));
    CHECK(cosine_similarity(Vector{1, 0}, Vector{0, 3}) == doctest::Approx(0.0));
    CHECK(cosine_similarity(Vector{1, 2}, Vector{2, 4}) == doctest::Approx(1.0));
    CHECK(cosine_similarity(Vector{1, 2}, Vector{-2, -4}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity(Vector{0, 0}, Vector{1, 0}), InvalidInput);

    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        Vector a(5), b(5);
        for (double& x : a) x = rng.uniform(-1, 1);
        for (double& x : b) x = rng.uniform(-1, 1);
        const double c = cosine_similarity(a, b);
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);
        CHECK(cosine_similarity(b, a) == doctest::Approx(c));
        Vector scaled = a;
        for (double& x : scaled) x *= 3.7;
        CHECK(cosine_similarity(scaled, b) == doctest::Approx(c));
    }
}

TEST_CASE("edit paths") {
    const auto a_i = lv({0, 0}), a_j = lv({2, 1}), base = lv({1, 1});
    const double alphas[] = {0.0, 0.5, 1.0};
    const auto p = linear_edit_path(a_i, a_j, base, alphas);
    CHECK(p.points.size() == 3);
    CHECK(p.points[2] == lv({3, 2}));
    CHECK_NOTHROW(p.validate());

    EditPath bad = p;
    bad.alphas = {0.0, 0.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    bad = p;
    bad.points.pop_back();
    CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("path nonlinearity") {
    EditPath straight{lv({0, 0}), {lv({0, 0}), lv({1, 1}), lv({2, 2})}, {0, 1, 2}};
    CHECK(path_nonlinearity(straight) == doctest::Approx(0.0));
    EditPath elbow{lv({0, 0}), {lv({0, 0}), lv({1, 0}), lv({1, 1})}, {0, 1, 2}};
    CHECK(path_nonlinearity(elbow) == doctest::Approx(0.5));
    EditPath loop{lv({0, 0}), {lv({0, 0}), lv({1, 0}), lv({0, 0})}, {0, 1, 2}};
    CHECK_THROWS_AS(path_nonlinearity(loop), InvalidInput);

    // Any linear-baseline path is straight.
    const auto& ds = dataset();
    const auto& s = ds.sequences[0];
    const auto alphas = synth::linspace(-1, 2, 13);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto p = linear_edit_path(s.latents[0], s.latents[10], ds.sequences[5].latents[k], alphas);
        CHECK(path_nonlinearity(p) <= 1e-9);
    }
}

TEST_CASE("identity preservation") {
    const auto& ds = dataset();
    SUBCASE("identical points") {
        const auto& l = ds.sequences[4].latents[3];
        EditPath p{l, {l, l, l}, {0, 1, 2}};
        CHECK(identity_preservation_score(p, world(), ds.sequences[4].class_id, ds.sequences[4].attribute_id) ==
              doctest::Approx(1.0));
    }
    SUBCASE("oracle sweep") {
        for (const auto& s : ds.sequences) {
            EditPath p{s.latents[0], s.latents, s.attribute_values};
            CHECK(std::abs(identity_preservation_score(p, world(), s.class_id, s.attribute_id) - 1.0) <= 1e-6);
        }
    }
    SUBCASE("drifting identity lowers the score") {
        const auto& s = ds.sequences[4];
        EditPath p{s.latents[0], s.latents, s.attribute_values};
        Rng rng(5);
        for (auto& l : p.points) {
            for (double& v : l.values) v += rng.uniform(-2, 2);
        }
        CHECK(identity_preservation_score(p, world(), s.class_id, s.attribute_id) < 0.99);
    }
    SUBCASE("short path") {
        const auto& l = ds.sequences[4].latents[3];
        EditPath p{l, {l}, {0}};
        CHECK_THROWS_AS(identity_preservation_score(p, world(), 2, 0), InvalidInput);
    }
}

TEST_CASE("error summaries") {
    const Vector e{1, 2, 3, 4, 10};
    const auto s = summarize_errors(e, 4);
    CHECK(s.mean == doctest::Approx(4.0));
    CHECK(s.std == doctest::Approx(std::sqrt((9 + 4 + 1 + 0 + 36) / 5.0)));
    CHECK(s.histogram.edges.size() == 5);
    CHECK(s.histogram.edges.front() == 1.0);
    CHECK(s.histogram.edges.back() == 10.0);
    CHECK(std::accumulate(s.histogram.counts.begin(), s.histogram.counts.end(), std::size_t{0}) == 5);
    CHECK(s.histogram.counts.back() == 1);

    const Vector flat{2, 2, 2};
    const auto f = summarize_errors(flat);
    CHECK(f.std == 0.0);
    CHECK(f.histogram.counts == std::vector<std::size_t>{3});
    CHECK_THROWS_AS(summarize_errors(Vector{}), InvalidInput);
}

TEST_CASE("magnitude trials") {
    const auto& ds = dataset();
    model::ModelParams p = model::init_model(model::LatentShape{}, 64, 3);
    model::zero_decoder_output(p);

    SUBCASE("zero change with a zero-residual decoder") {
        const double changes[] = {0.0};
        Rng rng(1);
        const auto r = attribute_error_stats(p, world(), ds, changes, 20, rng);
        for (const auto& t : r.trials) {
            CHECK(t.alpha == 0.0);
            CHECK(std::abs(t.error) <= 1e-3);
            CHECK(ds.split_of(t.class_id) == synth::Split::heldout);
        }
    }
    SUBCASE("trial bookkeeping") {
        const double changes[] = {-30.0, -6.0, 12.0, 27.0};
        Rng rng(2);
        const auto r = attribute_error_stats(p, world(), ds, changes, 40, rng, EditMethod::linear);
        REQUIRE(r.trials.size() == 40);
        std::size_t total = 0;
        for (std::size_t c : r.stats.histogram.counts) total += c;
        CHECK(total == 40);
        for (const auto& t : r.trials) {
            const auto& ref = ds.sequences[t.ref_sequence];
            const auto& base = ds.sequences[t.base_sequence];
            CHECK(ds.split_of(ref.class_id) == synth::Split::train);
            CHECK(ref.attribute_id == base.attribute_id);
            const double span = ref.attribute_values[t.ref_j] - ref.attribute_values[t.ref_i];
            CHECK(t.alpha * span == doctest::Approx(t.target_change));
            CHECK(t.base_value == base.attribute_values[t.base_index]);
            const double target = t.base_value + t.target_change;
            CHECK(target >= -30.0 - 1e-9);
            CHECK(target <= 30.0 + 1e-9);
            CHECK(t.error == doctest::Approx(t.recovered - target));
        }
        // Replaying with the same method reproduces the trials.
        const auto again = replay_trials(p, world(), ds, r.trials, EditMethod::linear);
        for (std::size_t k = 0; k < r.trials.size(); ++k) CHECK(again.trials[k].error == r.trials[k].error);
    }
    SUBCASE("invalid requests") {
        const double changes[] = {6.0};
        Rng rng(3);
        CHECK_THROWS_AS(attribute_error_stats(p, world(), ds, changes, 0, rng), InvalidInput);
        CHECK_THROWS_AS(attribute_error_stats(p, world(), ds, std::span<const double>{}, 5, rng), InvalidInput);
        const double too_far[] = {90.0};
        CHECK_THROWS_AS(attribute_error_stats(p, world(), ds, too_far, 5, rng), InvalidInput);
    }
}

TEST_CASE("path pca") {
    SUBCASE("a straight path has no second component") {
        EditPath p{lv({0, 0, 0}), {lv({0, 0, 0}), lv({1, 2, 3}), lv({2, 4, 6}), lv({4, 8, 12})}, {0, 1, 2, 4}};
        const EditPath paths[] = {p};
        const auto r = path_pca(paths, 2);
        const double length = std::sqrt(16 + 64 + 144);
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(r.polylines[0](k, 1)) <= 1e-6 * length);
        CHECK(r.explained_ratio[0] == doctest::Approx(1.0));
    }
    SUBCASE("one code, five bases, five polylines") {
        const auto& ds = dataset();
        model::ModelParams p = model::init_model(model::LatentShape{}, 64, 9);
        const auto& ref = ds.sequences[0];
        const auto alphas = synth::linspace(0, 1, 6);
        std::vector<EditPath> paths;
        for (std::size_t k = 0; k < 5; ++k) {
            paths.push_back(model_edit_path(p, ref.latents[0], ref.latents[10], ds.sequences[4].latents[2 * k], alphas));
        }
        const auto r = path_pca(paths, 2);
        REQUIRE(r.polylines.size() == 5);
        for (std::size_t a = 0; a < 5; ++a) {
            CHECK(r.polylines[a].rows() == 6);
            for (std::size_t b = a + 1; b < 5; ++b) CHECK_FALSE(r.polylines[a] == r.polylines[b]);
        }
    }
}

TEST_CASE("delta distribution overlap") {
    Rng rng(17);
    auto blob = [&](double centre, std::size_t n) {
        Matrix m(n, 4);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < 4; ++c) m(r, c) = centre + rng.normal();
        }
        return m;
    };
    SUBCASE("identical sets") {
        const Matrix a = blob(0.0, 30);
        CHECK(delta_distribution_report(a, a).normalized_centroid_distance == doctest::Approx(0.0));
    }
    SUBCASE("far-apart blobs") {
        const auto r = delta_distribution_report(blob(0.0, 40), blob(25.0, 40));
        CHECK(r.normalized_centroid_distance > 10.0);
        CHECK(r.projections_a.cols() == 2);
        CHECK(r.projections_b.rows() == 40);
    }
    SUBCASE("overlapping blobs") {
        CHECK(delta_distribution_report(blob(0.0, 200), blob(0.0, 200)).normalized_centroid_distance < 0.5);
    }
    SUBCASE("invalid sets") {
        CHECK_THROWS_AS(delta_distribution_report(Matrix(3, 4), Matrix(3, 5)), DimensionError);
        CHECK_THROWS_AS(delta_distribution_report(Matrix(0, 4), Matrix(3, 4)), InvalidInput);
    }
}

TEST_CASE("code and latent sets") {
    const auto& ds = dataset();
    const auto p = model::init_model(model::LatentShape{}, 64, 1);
    const auto train = ds.sequences_in(synth::Split::train, 0);
    CHECK(delta_codes(p, ds, train, 1).rows() == 2 * 10);
    CHECK(delta_codes(p, ds, train, 3).rows() == 2 * 8);
    CHECK(latent_rows(ds, train).rows() == 22);
    CHECK(latent_rows(ds, train).cols() == 128);

    const auto diffs = latent_differences(ds, train, 3);
    CHECK(diffs.rows() == 2 * 8);
    const auto& first = ds.sequences[train[0]];
    for (std::size_t d = 0; d < 128; ++d) CHECK(diffs(0, d) == first.latents[3].values[d] - first.latents[0].values[d]);
    CHECK_THROWS_AS(latent_differences(ds, train, 11), InvalidInput);
    CHECK_THROWS_AS(latent_differences(ds, train, 0), InvalidInput);
}

TEST_CASE("csv tables") {
    CsvTable t({"name", "count", "value"});
    t.add_row({std::string("plain"), 3LL, 0.1});
    t.add_row({std::string("with,comma \"q\""), -7LL, 1.0 / 3.0});
    t.add_row({std::string("big"), 0LL, -1.25e-12});
    CHECK_THROWS_AS(t.add_row({1.0}), DimensionError);

    const std::string text = t.str();
    CHECK(text.substr(0, 17) == "name,count,value\n");
    CHECK(text.find('\r') == std::string::npos);
    CHECK(text.find("0.333333333") != std::string::npos);

    const auto parsed = parse_csv(text);
    CHECK(parsed.header == t.header());
    REQUIRE(parsed.rows.size() == 3);
    CHECK(parsed.rows[1][0] == "with,comma \"q\"");
    CHECK(parsed.rows[1][1] == "-7");
    CHECK(parsed.rows[1][2] == format_real(1.0 / 3.0));
    CHECK(parsed.column("value") == 2);
    CHECK_THROWS_AS(parsed.column("absent"), InvalidInput);

    // Formatted decimals survive a parse/format cycle unchanged.
    for (double v : {0.1, 1.0 / 3.0, -1.25e-12, 123456789.123, 0.0}) {
        const std::string s = format_real(v);
        CHECK(format_real(std::stod(s)) == s);
    }
}
