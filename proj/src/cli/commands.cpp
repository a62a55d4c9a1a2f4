#include "dge/cli/commands.hpp"

#include "dge/cli/latent_file.hpp"
#include "dge/errors.hpp"
#include "dge/eval/eval.hpp"
#include "dge/numkit/pca.hpp"
#include "dge/trainer/checkpoint.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace dge::cli {

namespace fs = std::filesystem;
using eval::CsvCell;
using eval::CsvTable;
using nlohmann::json;
using numkit::Vector;

namespace {

// Bad command-line values found after parsing; exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
    trainer::write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

long long as_ll(std::size_t v) { return static_cast<long long>(v); }

// "file:index" -> (file, index)
std::pair<std::string, std::size_t> split_ref(const std::string& ref) {
    const auto colon = ref.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == ref.size()) {
        throw UsageError("expected FILE:INDEX, got '" + ref + "'");
    }
    const std::string idx = ref.substr(colon + 1);
    if (idx.find_first_not_of("0123456789") != std::string::npos) {
        throw UsageError("index in '" + ref + "' is not a non-negative integer");
    }
    return {ref.substr(0, colon), static_cast<std::size_t>(std::stoull(idx))};
}

model::LatentVector latent_at(const std::string& ref, const model::ModelParams& params) {
    const auto [file, index] = split_ref(ref);
    const LatentFile f = read_latent_file(file);
    if (index >= f.latents.size()) {
        throw InvalidInput(file + " holds " + std::to_string(f.latents.size()) + " latents, index " +
                           std::to_string(index) + " is out of range");
    }
    if (f.style_rows != params.shape.style_rows || f.style_dim != params.shape.style_dim) {
        throw DimensionError(file + " stores " + std::to_string(f.style_rows) + "x" + std::to_string(f.style_dim) +
                             " latents, the checkpoint expects " + std::to_string(params.shape.style_rows) + "x" +
                             std::to_string(params.shape.style_dim));
    }
    return f.latents[index];
}

void check_shapes(const model::ModelParams& params, const StoredDataset& data) {
    const auto& s = data.settings.world.shape;
    if (s.style_rows != params.shape.style_rows || s.style_dim != params.shape.style_dim) {
        throw DimensionError("checkpoint expects " + std::to_string(params.shape.style_rows) + "x" +
                             std::to_string(params.shape.style_dim) + " latents, data holds " +
                             std::to_string(s.style_rows) + "x" + std::to_string(s.style_dim));
    }
}

// Config and data must describe the same world.
void check_config_matches_data(const RunConfig& cfg, const WorldSettings& data) {
    const auto& a = cfg.data;
    const auto mismatch = [](const std::string& key) {
        throw ConfigError("config key '" + key + "' disagrees with the data manifest");
    };
    if (a.world.shape.style_rows != data.world.shape.style_rows) mismatch("shape.style_rows");
    if (a.world.shape.style_dim != data.world.shape.style_dim) mismatch("shape.style_dim");
    if (a.world.seed != data.world.seed) mismatch("world.seed");
    if (a.world.n_classes != data.world.n_classes) mismatch("world.classes");
    if (a.train_classes != data.train_classes) mismatch("world.train_classes");
    if (a.world.n_attributes != data.world.n_attributes) mismatch("world.attributes");
    if (a.points != data.points) mismatch("world.points");
    if (a.world.range_lo != data.world.range_lo || a.world.range_hi != data.world.range_hi) mismatch("world.range");
    if (a.world.curvature != data.world.curvature) mismatch("world.curvature");
}

CsvTable history_table(const trainer::TrainHistory& h) {
    CsvTable t({"epoch", "total", "identity", "transfer", "antisym", "linear", "orthonorm"});
    for (std::size_t e = 0; e < h.records.size(); ++e) {
        const auto& r = h.records[e];
        t.add_row({as_ll(e + 1), r.total, r.identity, r.transfer, r.antisym, r.linear, r.orthonorm});
    }
    return t;
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::vector<std::string> with_group(std::vector<std::string> header, const std::vector<std::string>& group,
                                    bool add) {
    if (add) {
        for (const auto& g : group) header.push_back("linear_" + g);
    }
    return header;
}

}  // namespace

std::vector<double> magnitude_targets(const synth::WorldConfig& world) {
    const double half = 0.5 * (world.range_hi - world.range_lo);
    return synth::linspace(-half, half, 21);
}

EvalReport build_eval_report(const model::ModelParams& params, const StoredDataset& data, const EvalOptions& opt) {
    check_shapes(params, data);
    const synth::OracleWorld world = world_of(data.settings);
    const auto& ds = data.dataset;
    const bool lin = opt.linear_baseline;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EvalReport rep;

    // Magnitude control on held-out classes.
    numkit::Rng rng(opt.seed);
    const auto targets = magnitude_targets(data.settings.world);
    const auto model_err = eval::attribute_error_stats(params, world, ds, targets, opt.trials, rng);
    eval::MagnitudeReport linear_err;
    if (lin) linear_err = eval::replay_trials(params, world, ds, model_err.trials, eval::EditMethod::linear);
    rep.error_stats = CsvTable(with_group({"trial", "class_id", "attribute_id", "base_index", "base_value",
                                           "target_change", "ref_class", "ref_i", "ref_j", "alpha", "recovered",
                                           "error"},
                                          {"recovered", "error"}, lin));
    for (std::size_t t = 0; t < model_err.trials.size(); ++t) {
        const auto& m = model_err.trials[t];
        std::vector<CsvCell> row{as_ll(t),
                                 as_ll(m.class_id),
                                 as_ll(m.attribute_id),
                                 as_ll(m.base_index),
                                 m.base_value,
                                 m.target_change,
                                 as_ll(ds.sequences[m.ref_sequence].class_id),
                                 as_ll(m.ref_i),
                                 as_ll(m.ref_j),
                                 m.alpha,
                                 m.recovered,
                                 m.error};
        if (lin) {
            row.emplace_back(linear_err.trials[t].recovered);
            row.emplace_back(linear_err.trials[t].error);
        }
        rep.error_stats.add_row(std::move(row));
    }

    // Full-range sweeps: the widest pair of each train sequence applied to the
    // first latent of each held-out sequence of the same attribute.
    struct PathInfo {
        std::size_t class_id, attribute_id, ref_class;
    };
    std::vector<PathInfo> info;
    std::vector<eval::EditPath> model_paths, linear_paths;
    for (std::size_t h : ds.sequences_in(synth::Split::heldout)) {
        const auto& base = ds.sequences[h];
        const auto alphas = synth::linspace(0.0, 1.0, base.size());
        for (std::size_t r : ds.sequences_in(synth::Split::train, base.attribute_id)) {
            const auto& ref = ds.sequences[r];
            model_paths.push_back(
                eval::model_edit_path(params, ref.latents.front(), ref.latents.back(), base.latents.front(), alphas));
            linear_paths.push_back(
                eval::linear_edit_path(ref.latents.front(), ref.latents.back(), base.latents.front(), alphas));
            info.push_back({base.class_id, base.attribute_id, ref.class_id});
        }
    }
    rep.identity_scores = CsvTable(with_group({"path", "class_id", "attribute_id", "ref_class", "identity_score",
                                               "nonlinearity"},
                                              {"identity_score", "nonlinearity"}, lin));
    std::vector<double> scores, nonlin, lscores, lnonlin;
    for (std::size_t p = 0; p < model_paths.size(); ++p) {
        scores.push_back(eval::identity_preservation_score(model_paths[p], world, info[p].class_id, info[p].attribute_id));
        nonlin.push_back(eval::path_nonlinearity(model_paths[p]));
        std::vector<CsvCell> row{as_ll(p), as_ll(info[p].class_id), as_ll(info[p].attribute_id),
                                 as_ll(info[p].ref_class), scores.back(), nonlin.back()};
        if (lin) {
            lscores.push_back(
                eval::identity_preservation_score(linear_paths[p], world, info[p].class_id, info[p].attribute_id));
            lnonlin.push_back(eval::path_nonlinearity(linear_paths[p]));
            row.emplace_back(lscores.back());
            row.emplace_back(lnonlin.back());
        }
        rep.identity_scores.add_row(std::move(row));
    }

    // Model paths define the projection; linear paths are projected onto the same axes.
    const auto proj = eval::path_pca(model_paths, 2);
    Vector pca_mean;
    numkit::Matrix axes;
    {
        std::size_t total = 0;
        for (const auto& p : model_paths) total += p.points.size();
        numkit::Matrix all(total, params.shape.flat_size());
        std::size_t r = 0;
        for (const auto& p : model_paths) {
            for (const auto& pt : p.points) std::copy(pt.values.begin(), pt.values.end(), all.row(r++).begin());
        }
        const auto res = numkit::pca(all, 2);
        pca_mean = res.mean;
        axes = res.components;
    }
    rep.paths_pca = CsvTable(with_group({"path", "point", "alpha", "pc1", "pc2"}, {"pc1", "pc2"}, lin));
    for (std::size_t p = 0; p < model_paths.size(); ++p) {
        for (std::size_t k = 0; k < model_paths[p].points.size(); ++k) {
            std::vector<CsvCell> row{as_ll(p), as_ll(k), model_paths[p].alphas[k], proj.polylines[p](k, 0),
                                     proj.polylines[p](k, 1)};
            if (lin) {
                Vector c = linear_paths[p].points[k].values;
                numkit::axpy(-1.0, pca_mean, c);
                row.emplace_back(numkit::dot(c, axes.row(0)));
                row.emplace_back(numkit::dot(c, axes.row(1)));
            }
            rep.paths_pca.add_row(std::move(row));
        }
    }

    // Code sets of the train family vs the held-out family for every step size.
    rep.delta_overlap = CsvTable(with_group({"attribute_id", "steps", "delta_distance", "latent_distance"},
                                            {"delta_distance"}, lin));
    std::vector<double> dd, ld, lind;
    for (std::size_t a = 0; a < data.settings.world.n_attributes; ++a) {
        const auto tr = ds.sequences_in(synth::Split::train, a);
        const auto ho = ds.sequences_in(synth::Split::heldout, a);
        const auto latent_d = eval::delta_distribution_report(eval::latent_rows(ds, tr), eval::latent_rows(ds, ho))
                                  .normalized_centroid_distance;
        for (std::size_t s = 1; s < data.settings.points; ++s) {
            const double d = eval::delta_distribution_report(eval::delta_codes(params, ds, tr, s),
                                                             eval::delta_codes(params, ds, ho, s))
                                 .normalized_centroid_distance;
            dd.push_back(d);
            ld.push_back(latent_d);
            std::vector<CsvCell> row{as_ll(a), as_ll(s), d, latent_d};
            if (lin) {
                lind.push_back(eval::delta_distribution_report(eval::latent_differences(ds, tr, s),
                                                               eval::latent_differences(ds, ho, s))
                                   .normalized_centroid_distance);
                row.emplace_back(lind.back());
            }
            rep.delta_overlap.add_row(std::move(row));
        }
    }

    rep.summary = {
        {"magnitude_error_mean", model_err.stats.mean, lin ? linear_err.stats.mean : nan},
        {"magnitude_error_std", model_err.stats.std, lin ? linear_err.stats.std : nan},
        {"identity_score_mean", mean(scores), lin ? mean(lscores) : nan},
        {"path_nonlinearity_median", median(nonlin), lin ? median(lnonlin) : nan},
        {"delta_distance_mean", mean(dd), lin ? mean(lind) : nan},
        {"latent_distance_mean", mean(ld), lin ? mean(ld) : nan},
    };
    return rep;
}

std::string format_summary(const std::vector<SummaryRow>& rows, bool with_linear) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-26s %16s", "metric", "model");
    out << buf << (with_linear ? "           linear" : "") << '\n';
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-26s %16s", r.metric.c_str(), eval::format_real(r.model).c_str());
        out << buf;
        if (with_linear) {
            std::snprintf(buf, sizeof buf, " %16s", eval::format_real(r.linear).c_str());
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

namespace {

// Routes logging to `err` for the lifetime of the guard.
class LogScope {
public:
    explicit LogScope(std::ostream& err);
    ~LogScope() { spdlog::set_default_logger(previous_); }
    LogScope(const LogScope&) = delete;
    LogScope& operator=(const LogScope&) = delete;

private:
    std::shared_ptr<spdlog::logger> previous_;
};

LogScope::LogScope(std::ostream& err) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("dge", sink);
    logger->set_pattern("[%l] %v");
    const char* env = std::getenv("DLE_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
        logger->set_level(spdlog::level::err);
    } else if (level == "debug") {
        logger->set_level(spdlog::level::debug);
    } else {
        logger->set_level(spdlog::level::info);
        if (level != "info") logger->warn("DLE_LOG={} not recognized (error, info, debug); using info", level);
    }
    spdlog::set_default_logger(logger);
}

struct GenDataArgs {
    WorldSettings settings;
    std::vector<double> range{-30.0, 30.0};
    std::string out;
};

int cmd_gen_data(GenDataArgs& a, std::ostream& out) {
    a.settings.world.range_lo = a.range[0];
    a.settings.world.range_hi = a.range[1];
    try {
        a.settings.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const auto stored = write_dataset(a.out, a.settings);
    spdlog::info("wrote {} sequences to {}", stored.files.size(), a.out);
    json summary{{"sequences", stored.files.size()}, {"manifest", (fs::path(a.out) / kManifestName).string()}};
    out << summary.dump() << '\n';
    return kExitOk;
}

struct TrainArgs {
    std::string config, data, out;
    std::optional<std::size_t> epochs;
    std::optional<std::uint64_t> seed;
    bool resume = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    RunConfig cfg = load_run_config(a.config);
    if (a.epochs) {
        if (*a.epochs == 0) throw UsageError("--epochs must be positive");
        cfg.train.epochs = *a.epochs;
    }
    if (a.seed) cfg.train.seed = *a.seed;
    const StoredDataset data = read_dataset(a.data);
    check_config_matches_data(cfg, data.settings);
    cfg.train.checkpoint_path = a.out;

    std::optional<trainer::TrainState> resume;
    if (a.resume && fs::exists(a.out)) {
        auto ck = trainer::load_checkpoint(a.out);
        spdlog::info("resuming from {} at epoch {}", a.out, ck.state.history.records.size());
        resume = std::move(ck.state);
    }
    const auto report_every = std::max<std::size_t>(1, cfg.train.epochs / 20);
    const auto st = trainer::train(data.dataset, cfg.train, std::move(resume), [&](const trainer::TrainState& s) {
        const std::size_t n = s.history.records.size();
        if (n % report_every == 0) {
            const auto& r = s.history.records.back();
            spdlog::info("epoch {}/{} total {:.6g} identity {:.6g} transfer {:.6g}", n, cfg.train.epochs, r.total,
                         r.identity, r.transfer);
        }
    });
    fs::path history = cfg.history_file;
    if (history.is_relative()) history = fs::path(a.out).parent_path() / history;
    history_table(st.history).write(history);

    const auto& last = st.history.records.back();
    json summary{{"epochs", st.history.records.size()},
                 {"converged", st.converged},
                 {"total", last.total},
                 {"identity", last.identity},
                 {"transfer", last.transfer},
                 {"antisym", last.antisym},
                 {"linear", last.linear},
                 {"orthonorm", last.orthonorm},
                 {"checkpoint", a.out},
                 {"history", history.string()}};
    out << summary.dump() << '\n';
    return kExitOk;
}

struct EditArgs {
    std::string checkpoint, base, out;
    std::vector<std::string> ref_pair;
    double alpha = 1.0;
};

int cmd_edit(const EditArgs& a, std::ostream& out) {
    const auto ck = trainer::load_checkpoint(a.checkpoint);
    const auto& params = ck.state.params;
    const auto base = latent_at(a.base, params);
    const auto ref_i = latent_at(a.ref_pair.at(0), params);
    const auto ref_j = latent_at(a.ref_pair.at(1), params);
    numkit::Rng unused(0);
    const auto delta = model::encode(params, ref_i, ref_j, unused, false);
    const auto edited = model::decode_edit(params, base, delta, a.alpha, unused, false);
    write_latent_file(a.out, {params.shape.style_rows, params.shape.style_dim, {edited}});
    json summary{{"out", a.out}, {"alpha", a.alpha}, {"delta", delta.values}};
    out << summary.dump() << '\n';
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint, data, report, baseline;
    EvalOptions options;
};

int cmd_eval(EvalArgs& a, std::ostream& out) {
    if (!a.baseline.empty() && a.baseline != "linear") throw UsageError("--baseline accepts only 'linear'");
    if (a.options.trials == 0) throw UsageError("--trials must be positive");
    a.options.linear_baseline = a.baseline == "linear";
    const auto ck = trainer::load_checkpoint(a.checkpoint);
    const StoredDataset data = read_dataset(a.data);
    const auto rep = build_eval_report(ck.state.params, data, a.options);
    std::error_code ec;
    fs::create_directories(a.report, ec);
    if (ec) throw IoError("cannot create " + a.report + ": " + ec.message());
    const fs::path dir = a.report;
    rep.error_stats.write(dir / "error_stats.csv");
    rep.identity_scores.write(dir / "identity_scores.csv");
    rep.paths_pca.write(dir / "paths_pca.csv");
    rep.delta_overlap.write(dir / "delta_overlap.csv");
    out << format_summary(rep.summary, a.options.linear_baseline);
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    const LogScope logging(err);
    CLI::App app{"Learned difference codes for latent-space attribute editing, on a synthetic oracle world", "dge"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "Generate an oracle dataset (latent files + manifest.json)");
    g->add_option("--seed", gen.settings.world.seed, "Oracle seed")->capture_default_str();
    g->add_option("--classes", gen.settings.world.n_classes, "Number of classes")->capture_default_str();
    g->add_option("--train-classes", gen.settings.train_classes, "Classes in the train split")->capture_default_str();
    g->add_option("--attributes", gen.settings.world.n_attributes, "Number of attributes")->capture_default_str();
    g->add_option("--points", gen.settings.points, "Latents per sequence (>= 3)")->capture_default_str();
    g->add_option("--range", gen.range, "Attribute range LO HI")->expected(2)->capture_default_str();
    g->add_option("--curvature", gen.settings.world.curvature, "Nonlinearity gain of the map")->capture_default_str();
    g->add_option("--style-rows", gen.settings.world.shape.style_rows, "Style rows per latent")->capture_default_str();
    g->add_option("--style-dim", gen.settings.world.shape.style_dim, "Style row width")->capture_default_str();
    g->add_option("--out", gen.out, "Output directory")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model; writes the checkpoint and history.csv");
    t->add_option("--config", tr.config, "Run configuration (JSON)")->required();
    t->add_option("--data", tr.data, "Dataset directory from gen-data")->required();
    t->add_option("--out", tr.out, "Checkpoint path")->required();
    t->add_option("--epochs", tr.epochs, "Override training.epochs");
    t->add_option("--seed", tr.seed, "Override training.seed");
    t->add_flag("--resume", tr.resume, "Continue from the checkpoint at --out when it exists");

    EditArgs ed;
    auto* e = app.add_subcommand("edit", "Apply the code of a reference pair to a base latent");
    e->add_option("--checkpoint", ed.checkpoint, "Trained checkpoint")->required();
    e->add_option("--base", ed.base, "Base latent as FILE:INDEX")->required();
    e->add_option("--ref-pair", ed.ref_pair, "Reference pair FILE:I FILE:J")->expected(2)->required();
    e->add_option("--alpha", ed.alpha, "Code scale")->capture_default_str();
    e->add_option("--out", ed.out, "Output latent file (one latent)")->required();

    EvalArgs ev;
    auto* v = app.add_subcommand("eval", "Write evaluation tables and print a summary");
    v->add_option("--checkpoint", ev.checkpoint, "Trained checkpoint")->required();
    v->add_option("--data", ev.data, "Dataset directory")->required();
    v->add_option("--report", ev.report, "Report directory")->required();
    v->add_option("--baseline", ev.baseline, "Add side-by-side columns for a baseline (linear)");
    v->add_option("--trials", ev.options.trials, "Magnitude-control trials")->capture_default_str();
    v->add_option("--seed", ev.options.seed, "Seed of the trial draws")->capture_default_str();

    std::string template_out, reference_out;
    auto* ct = app.add_subcommand("config-template", "Print (or write) the default run configuration");
    ct->add_option("--out", template_out, "Write to this file instead of stdout");
    auto* cr = app.add_subcommand("config-reference", "Print (or write) the configuration key reference");
    cr->add_option("--out", reference_out, "Write to this file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& ex) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (g->parsed()) return cmd_gen_data(gen, out);
        if (t->parsed()) return cmd_train(tr, out);
        if (e->parsed()) return cmd_edit(ed, out);
        if (v->parsed()) return cmd_eval(ev, out);
        if (ct->parsed()) {
            const std::string text = to_json(RunConfig{}).dump(2) + "\n";
            if (template_out.empty()) {
                out << text;
            } else {
                write_text(template_out, text);
            }
            return kExitOk;
        }
        if (cr->parsed()) {
            if (reference_out.empty()) {
                out << config_reference();
            } else {
                write_text(reference_out, config_reference());
            }
            return kExitOk;
        }
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& ex) {
        spdlog::error("{}", ex.what());
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace dge::cli
