#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lsast/content.hpp"
#include "lsast/prompt_space.hpp"
#include "lsast/schedule.hpp"
#include "lsast/trainer.hpp"
#include "lsast/unet.hpp"

namespace lsast {

enum class ValueKind { integer, real, boolean, text, int_list, text_list };

struct SchemaEntry {
    std::string key;  // dotted, e.g. "train.lr"
    ValueKind kind;
    std::string fallback;  // default, in YAML flow syntax
    std::string doc;
};

// Every accepted key with its type, default and one-line description.
const std::vector<SchemaEntry>& config_schema();

struct PretrainSettings {
    int steps = 3000;
    double lr = 2e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    int decay_step = 2250;
    int batch_size = 4;
    std::string photo_dir;  // empty: procedural photos
    int photo_count = 128;
    std::vector<std::string> concepts;      // captioned procedural collections
    std::vector<std::string> concept_dirs;  // captioned image folders (caption = folder name)
    int concept_count = 32;
    int branch_steps = 400;
    double branch_lr = 1e-3;
};

struct DataSettings {
    std::string style_dir;  // empty: procedural collection data.style
    std::string style = "swirl";
    int style_count = 8;
    std::string content_dir;  // empty: procedural photos
    int content_count = 4;
};

struct EvalSettings {
    int samples = 200;
    std::uint64_t extractor_seed = 0;
    int feature_dim = 64;
};

struct AblateSettings {
    int steps = 200;
    std::vector<std::string> styles{"swirl"};
    int samples = 8;
};

// Fully typed experiment configuration.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    bool deterministic = false;
    PromptLayout layout;
    int prompt_dim = 768;
    int diffusion_timesteps = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    VarianceKind variance = VarianceKind::posterior;
    BackboneConfig backbone;
    TrainConfig train;
    PretrainSettings pretrain;
    DataSettings data;
    CannyOptions canny;
    double content_strength = 1.0;
    double stylize_strength = 0.8;
    EvalSettings eval;
    AblateSettings ablate;

    NoiseSchedule schedule() const;
};

// Flat dotted-key view of a config; values are YAML scalars or flow sequences.
using ConfigValues = std::map<std::string, std::string>;

// Defaults for every schema key.
ConfigValues default_values();

// Reads a YAML file (nested maps or dotted keys) into values; unknown keys are rejected.
ConfigValues read_config_file(const std::filesystem::path& path);

// Applies "key=value" overrides, each checked against the schema.
void apply_override(ConfigValues& values, const std::string& assignment);

// Parses and validates; every error names the offending key.
ExperimentConfig resolve_config(const ConfigValues& values);

// Nested YAML document that reproduces the configuration when read back.
std::string echo_config(const ConfigValues& values);

// Convenience: defaults, then the file (if non-empty), then overrides.
ConfigValues load_config_values(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace lsast
