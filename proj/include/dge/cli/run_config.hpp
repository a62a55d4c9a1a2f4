#pragma once

#include "dge/synth/synth_world.hpp"
#include "dge/trainer/trainer.hpp"

#include "json.hpp"

#include <stdexcept>
#include <string>

namespace dge::cli {

// A configuration document that cannot be used; exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dataset generation settings; gen-data flags and the "world" section share them.
struct WorldSettings {
    synth::WorldConfig world;
    std::size_t points = 11;
    std::size_t train_classes = 2;

    // Throws ConfigError naming the offending setting.
    void validate() const;
    friend bool operator==(const WorldSettings&, const WorldSettings&) = default;
};

// Everything `dge train` needs besides the data directory.
struct RunConfig {
    WorldSettings data;
    trainer::TrainConfig train;
    std::string history_file = "history.csv";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& config);

// Strict: every key must be present with the right JSON type and no other key is
// accepted. Throws ConfigError whose message names the key path ("training.lr").
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

// Markdown table of every key with its type, default and meaning.
std::string config_reference();

}  // namespace dge::cli
