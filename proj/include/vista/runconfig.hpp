#pragma once

#include <string>

#include "vista/fusion.hpp"
#include "vista/model.hpp"
#include "vista/train.hpp"

namespace vista {

// Settings for one data-generation / training / evaluation run.
// Parsed from a key=value file; every key has a default, unknown keys
// are rejected by name. The resolved configuration is echoed into the
// output directory so runs are reproducible from their artifacts.
struct RunConfig {
    ModelConfig model;

    // data generation
    int data_groups = 1500;         // image groups for the instructed-edit task
    int data_edits_per_group = 3;   // edited variants per group
    int data_docs = 800;            // documents for the text-with-image task
    int data_max_objects = 3;       // objects per scene
    std::string data_background = "white";
    double data_filter_drop = 0.0;  // target rejection fraction for similarity filtering

    TrainConfig train;

    int checkpoint_every = 200;  // steps between periodic checkpoints

    FusionMethod fusion = FusionMethod::Interleaved;
    uint64_t seed = 42;
    std::string out = "out";

    void validate() const;
};

// Parse a key=value file. Lines starting with '#' and blank lines are
// ignored. Keys not in the registry raise ConfigError naming the key.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);

// Apply a single "key=value" override (same registry as the file).
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// key=value rendering of every registered key, suitable for echoing.
std::string render_run_config(const RunConfig& cfg);

}  // namespace vista
