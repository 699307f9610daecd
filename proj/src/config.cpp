#include "lsast/config.hpp"

#include <algorithm>
#include <cmath>

#include <yaml-cpp/yaml.h>

#include "lsast/error.hpp"
#include "lsast/toy_data.hpp"

namespace lsast {

namespace fs = std::filesystem;

const std::vector<SchemaEntry>& config_schema() {
    using K = ValueKind;
    static const std::vector<SchemaEntry> schema{
        {"seed", K::integer, "0", "master seed; every random stream is derived from it by label"},
        {"deterministic", K::boolean, "false", "request bit-reproducible runs (every code path is single-threaded, so this is always honoured)"},
        {"prompt.stages", K::integer, "10", "S, number of timestep stages"},
        {"prompt.layers", K::integer, "3", "L, 3 for one prompt per depth band or 1 for a shared prompt"},
        {"prompt.dim", K::integer, "768", "D, prompt and context width"},
        {"prompt.orientation", K::text, "noise_level", "stage numbering: noise_level or denoise_order"},
        {"diffusion.timesteps", K::integer, "1000", "T"},
        {"diffusion.beta_start", K::real, "1e-4", "first beta of the linear schedule"},
        {"diffusion.beta_end", K::real, "0.02", "last beta of the linear schedule"},
        {"diffusion.variance", K::text, "posterior", "sampling variance: posterior or beta"},
        {"backbone.resolution", K::integer, "64", "image side length"},
        {"backbone.channels", K::int_list, "[8, 16, 32]", "widths of the three U-Net levels"},
        {"backbone.res_blocks", K::integer, "2", "residual blocks per level"},
        {"backbone.norm_groups", K::integer, "4", "GroupNorm groups"},
        {"backbone.time_dim", K::integer, "32", "sinusoidal timestep embedding width"},
        {"backbone.inject_encoder", K::boolean, "false", "also add content residuals to encoder features"},
        {"train.mode", K::text, "prompt_inversion", "prompt_inversion or full_finetune"},
        {"train.lr", K::real, "0.3", "initial learning rate"},
        {"train.decay", K::real, "0.1", "learning-rate factor applied after decay_step"},
        {"train.decay_step", K::integer, "2000", "last step at the initial learning rate"},
        {"train.total_steps", K::integer, "10000", "optimizer steps"},
        {"train.batch_size", K::integer, "4", "images per step"},
        {"train.optimizer", K::text, "sgd_momentum", "sgd_momentum or adam"},
        {"train.momentum", K::real, "0.9", "SGD momentum, or Adam beta1"},
        {"train.timestep_sampling", K::text, "stratified", "uniform or stratified (low-discrepancy) timestep draws"},
        {"train.log_every", K::integer, "100", "steps between progress lines"},
        {"pretrain.steps", K::integer, "3000", "backbone pretraining steps"},
        {"pretrain.lr", K::real, "2e-3", "backbone pretraining learning rate"},
        {"pretrain.optimizer", K::text, "adam", "sgd_momentum or adam"},
        {"pretrain.decay_step", K::integer, "2250", "last pretraining step at the initial learning rate"},
        {"pretrain.batch_size", K::integer, "4", "images per pretraining step"},
        {"pretrain.photo_dir", K::text, "", "generic photo folder; empty uses procedural photos"},
        {"pretrain.photo_count", K::integer, "128", "procedural photos when photo_dir is empty"},
        {"pretrain.concepts", K::text_list, "[swirl, woodblock, stipple]", "captioned procedural collections"},
        {"pretrain.concept_dirs", K::text_list, "[]", "captioned image folders, caption taken from the folder name"},
        {"pretrain.concept_count", K::integer, "32", "images per procedural concept"},
        {"pretrain.branch_steps", K::integer, "400", "content-branch training steps"},
        {"pretrain.branch_lr", K::real, "1e-3", "content-branch learning rate (adam)"},
        {"data.style_dir", K::text, "", "style image folder; empty uses the procedural collection data.style"},
        {"data.style", K::text, "swirl", "procedural style collection: swirl, woodblock or stipple"},
        {"data.style_count", K::integer, "8", "procedural style images"},
        {"data.content_dir", K::text, "", "content image folder for ablations; empty uses procedural photos"},
        {"data.content_count", K::integer, "4", "procedural content images"},
        {"content.strength", K::real, "1.0", "content residual scale"},
        {"content.canny_low", K::real, "0.1", "low hysteresis threshold"},
        {"content.canny_high", K::real, "0.2", "high hysteresis threshold"},
        {"content.canny_sigma", K::real, "1.4", "Gaussian blur std before Sobel"},
        {"content.threshold_mode", K::text, "relative_to_max", "relative_to_max or absolute"},
        {"stylize.strength", K::real, "0.8", "tau, fraction of T used to noise the content image"},
        {"eval.samples", K::integer, "200", "stylized samples per FID evaluation"},
        {"eval.extractor_seed", K::integer, "0", "seed of the random-convolution feature extractor"},
        {"eval.feature_dim", K::integer, "64", "feature width of the extractor"},
        {"ablate.steps", K::integer, "200", "prompt-training steps per ablation variant"},
        {"ablate.styles", K::text_list, "[swirl]", "procedural style collections to ablate over"},
        {"ablate.samples", K::integer, "8", "stylized samples per variant and style"},
    };
    return schema;
}

namespace {

const SchemaEntry& entry_for(const std::string& key) {
    for (const SchemaEntry& e : config_schema())
        if (e.key == key) return e;
    fail(ErrorKind::config, "unknown config key '" + key + "'");
}

[[noreturn]] void bad_value(const std::string& key, const std::string& expected, const std::string& got) {
    fail(ErrorKind::config, key + ": expected " + expected + ", got '" + got + "'");
}

std::string node_text(const YAML::Node& node) {
    if (node.IsScalar()) return node.Scalar();
    if (node.IsNull()) return "";
    YAML::Emitter out;
    out << YAML::Flow << node;
    return out.c_str();
}

void flatten(const YAML::Node& node, const std::string& prefix, ConfigValues& out) {
    for (const auto& kv : node) {
        const std::string key = prefix.empty() ? kv.first.as<std::string>() : prefix + "." + kv.first.as<std::string>();
        if (kv.second.IsMap()) {
            flatten(kv.second, key, out);
            continue;
        }
        entry_for(key);
        out[key] = node_text(kv.second);
    }
}

YAML::Node parse_node(const std::string& key, const std::string& text) {
    try {
        return YAML::Load(text);
    } catch (const YAML::Exception&) {
        bad_value(key, "a YAML value", text);
    }
}

long long as_integer(const ConfigValues& v, const std::string& key) {
    const std::string& s = v.at(key);
    try {
        std::size_t used = 0;
        const long long out = std::stoll(s, &used);
        if (used == s.size()) return out;
    } catch (const std::exception&) {
    }
    bad_value(key, "an integer", s);
}

int as_int(const ConfigValues& v, const std::string& key) {
    const long long x = as_integer(v, key);
    if (x < INT32_MIN || x > INT32_MAX) bad_value(key, "a 32-bit integer", v.at(key));
    return static_cast<int>(x);
}

double as_real(const ConfigValues& v, const std::string& key) {
    const std::string& s = v.at(key);
    try {
        std::size_t used = 0;
        const double out = std::stod(s, &used);
        if (used == s.size() && std::isfinite(out)) return out;
    } catch (const std::exception&) {
    }
    bad_value(key, "a finite number", s);
}

bool as_bool(const ConfigValues& v, const std::string& key) {
    const std::string& s = v.at(key);
    if (s == "true") return true;
    if (s == "false") return false;
    bad_value(key, "true or false", s);
}

template <class T>
std::vector<T> as_list(const ConfigValues& v, const std::string& key, const std::string& expected) {
    const YAML::Node n = parse_node(key, v.at(key));
    if (!n.IsSequence()) bad_value(key, expected, v.at(key));
    std::vector<T> out;
    try {
        for (const auto& item : n) out.push_back(item.as<T>());
    } catch (const YAML::Exception&) {
        bad_value(key, expected, v.at(key));
    }
    return out;
}

void check(bool ok, const std::string& key, const std::string& what) {
    if (!ok) fail(ErrorKind::config, key + ": " + what);
}

// Re-tags a component's validation error with the config section it came from.
template <class F>
void validated(const std::string& section, F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config) throw;
        fail(ErrorKind::config, section + ": " + e.what());
    }
}

}  // namespace

ConfigValues default_values() {
    ConfigValues out;
    for (const SchemaEntry& e : config_schema()) out[e.key] = e.fallback;
    return out;
}

ConfigValues read_config_file(const fs::path& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::BadFile&) {
        fail(ErrorKind::io, "cannot read config '" + path.string() + "'");
    } catch (const YAML::Exception& e) {
        fail(ErrorKind::config, "config '" + path.string() + "' is not valid YAML: " + e.what());
    }
    ConfigValues out;
    if (root.IsNull()) return out;
    if (!root.IsMap()) fail(ErrorKind::config, "config '" + path.string() + "' must be a mapping");
    flatten(root, "", out);
    return out;
}

void apply_override(ConfigValues& values, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        fail(ErrorKind::config, "override '" + assignment + "' must look like key=value");
    const std::string key = assignment.substr(0, eq);
    entry_for(key);
    values[key] = assignment.substr(eq + 1);
}

ConfigValues load_config_values(const fs::path& path, const std::vector<std::string>& overrides) {
    ConfigValues values = default_values();
    if (!path.empty())
        for (const auto& [k, v] : read_config_file(path)) values[k] = v;
    for (const std::string& o : overrides) apply_override(values, o);
    return values;
}

NoiseSchedule ExperimentConfig::schedule() const {
    return NoiseSchedule(diffusion_timesteps, beta_start, beta_end, variance);
}

ExperimentConfig resolve_config(const ConfigValues& given) {
    ConfigValues v = default_values();
    for (const auto& [k, val] : given) {
        entry_for(k);
        v[k] = val;
    }
    ExperimentConfig c;

    const long long seed = as_integer(v, "seed");
    check(seed >= 0, "seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.deterministic = as_bool(v, "deterministic");

    c.layout.stages = as_int(v, "prompt.stages");
    c.layout.layers = as_int(v, "prompt.layers");
    c.layout.timesteps = as_int(v, "diffusion.timesteps");
    validated("prompt.orientation", [&] { c.layout.orientation = parse_orientation(v.at("prompt.orientation")); });
    validated("prompt", [&] { c.layout.validate(); });
    c.prompt_dim = as_int(v, "prompt.dim");
    check(c.prompt_dim >= 2, "prompt.dim", "must be at least 2");

    c.diffusion_timesteps = c.layout.timesteps;
    c.beta_start = as_real(v, "diffusion.beta_start");
    c.beta_end = as_real(v, "diffusion.beta_end");
    check(0.0 < c.beta_start && c.beta_start <= c.beta_end && c.beta_end < 1.0, "diffusion.beta_start",
          "need 0 < beta_start <= beta_end < 1");
    const std::string variance = v.at("diffusion.variance");
    if (variance == "posterior") c.variance = VarianceKind::posterior;
    else if (variance == "beta") c.variance = VarianceKind::beta;
    else bad_value("diffusion.variance", "posterior or beta", variance);

    c.backbone.resolution = as_int(v, "backbone.resolution");
    c.backbone.channels = as_list<int>(v, "backbone.channels", "a list of three integers");
    c.backbone.res_blocks = as_int(v, "backbone.res_blocks");
    c.backbone.norm_groups = as_int(v, "backbone.norm_groups");
    c.backbone.time_dim = as_int(v, "backbone.time_dim");
    c.backbone.inject_encoder = as_bool(v, "backbone.inject_encoder");
    c.backbone.context_dim = c.prompt_dim;
    validated("backbone", [&] { c.backbone.validate(); });

    TrainConfig& t = c.train;
    validated("train.mode", [&] { t.mode = parse_mode(v.at("train.mode")); });
    check(t.mode != TrainMode::content_branch, "train.mode", "must be prompt_inversion or full_finetune");
    t.lr = as_real(v, "train.lr");
    t.decay = as_real(v, "train.decay");
    t.decay_step = as_int(v, "train.decay_step");
    t.total_steps = as_int(v, "train.total_steps");
    t.batch_size = as_int(v, "train.batch_size");
    validated("train.optimizer", [&] { t.optimizer = parse_optimizer(v.at("train.optimizer")); });
    t.momentum = as_real(v, "train.momentum");
    validated("train.timestep_sampling", [&] { t.sampling = parse_sampling(v.at("train.timestep_sampling")); });
    t.log_every = as_int(v, "train.log_every");
    t.resolution = c.backbone.resolution;
    t.seed = c.seed;
    t.validate();

    PretrainSettings& p = c.pretrain;
    p.steps = as_int(v, "pretrain.steps");
    p.lr = as_real(v, "pretrain.lr");
    validated("pretrain.optimizer", [&] { p.optimizer = parse_optimizer(v.at("pretrain.optimizer")); });
    p.decay_step = as_int(v, "pretrain.decay_step");
    p.batch_size = as_int(v, "pretrain.batch_size");
    p.photo_dir = v.at("pretrain.photo_dir");
    p.photo_count = as_int(v, "pretrain.photo_count");
    p.concepts = as_list<std::string>(v, "pretrain.concepts", "a list of collection names");
    p.concept_dirs = as_list<std::string>(v, "pretrain.concept_dirs", "a list of folders");
    p.concept_count = as_int(v, "pretrain.concept_count");
    p.branch_steps = as_int(v, "pretrain.branch_steps");
    p.branch_lr = as_real(v, "pretrain.branch_lr");
    check(p.steps >= 0, "pretrain.steps", "must be non-negative");
    check(p.lr > 0.0, "pretrain.lr", "must be positive");
    check(p.decay_step >= 0 && (p.steps == 0 || p.decay_step < p.steps), "pretrain.decay_step",
          "must be below pretrain.steps");
    check(p.batch_size >= 1, "pretrain.batch_size", "must be positive");
    check(p.photo_count >= 1, "pretrain.photo_count", "must be positive");
    check(p.concept_count >= 1, "pretrain.concept_count", "must be positive");
    check(p.branch_steps >= 0, "pretrain.branch_steps", "must be non-negative");
    check(p.branch_lr > 0.0, "pretrain.branch_lr", "must be positive");
    for (const std::string& name : p.concepts)
        check(std::find(toy::style_names().begin(), toy::style_names().end(), name) != toy::style_names().end(),
              "pretrain.concepts", "unknown collection '" + name + "'");

    DataSettings& d = c.data;
    d.style_dir = v.at("data.style_dir");
    d.style = v.at("data.style");
    d.style_count = as_int(v, "data.style_count");
    d.content_dir = v.at("data.content_dir");
    d.content_count = as_int(v, "data.content_count");
    check(std::find(toy::style_names().begin(), toy::style_names().end(), d.style) != toy::style_names().end(),
          "data.style", "unknown collection '" + d.style + "'");
    check(d.style_count >= 1, "data.style_count", "must be positive");
    check(d.content_count >= 1, "data.content_count", "must be positive");

    c.canny.low = as_real(v, "content.canny_low");
    c.canny.high = as_real(v, "content.canny_high");
    c.canny.sigma = as_real(v, "content.canny_sigma");
    const std::string mode = v.at("content.threshold_mode");
    if (mode == "relative_to_max") c.canny.mode = ThresholdMode::relative_to_max;
    else if (mode == "absolute") c.canny.mode = ThresholdMode::absolute;
    else bad_value("content.threshold_mode", "relative_to_max or absolute", mode);
    check(c.canny.low >= 0.0 && c.canny.low < c.canny.high, "content.canny_low", "invalid thresholds (need 0 <= low < high)");
    check(c.canny.sigma > 0.0, "content.canny_sigma", "must be positive");
    c.content_strength = as_real(v, "content.strength");
    check(c.content_strength >= 0.0, "content.strength", "must be non-negative");

    c.stylize_strength = as_real(v, "stylize.strength");
    check(c.stylize_strength >= 0.0 && c.stylize_strength <= 1.0, "stylize.strength", "must be in [0, 1]");

    c.eval.samples = as_int(v, "eval.samples");
    const long long xseed = as_integer(v, "eval.extractor_seed");
    check(xseed >= 0, "eval.extractor_seed", "must be non-negative");
    c.eval.extractor_seed = static_cast<std::uint64_t>(xseed);
    c.eval.feature_dim = as_int(v, "eval.feature_dim");
    check(c.eval.samples >= 2, "eval.samples", "must be at least 2");
    check(c.eval.feature_dim >= 1, "eval.feature_dim", "must be positive");

    c.ablate.steps = as_int(v, "ablate.steps");
    c.ablate.styles = as_list<std::string>(v, "ablate.styles", "a list of collection names");
    c.ablate.samples = as_int(v, "ablate.samples");
    check(c.ablate.steps >= 0, "ablate.steps", "must be non-negative");
    check(!c.ablate.styles.empty(), "ablate.styles", "must name at least one collection");
    for (const std::string& name : c.ablate.styles)
        check(std::find(toy::style_names().begin(), toy::style_names().end(), name) != toy::style_names().end(),
              "ablate.styles", "unknown collection '" + name + "'");
    check(c.ablate.samples >= 2, "ablate.samples", "must be at least 2");
    return c;
}

std::string echo_config(const ConfigValues& given) {
    ConfigValues v = default_values();
    for (const auto& [k, val] : given) v[entry_for(k).key] = val;
    YAML::Node root(YAML::NodeType::Map);
    for (const SchemaEntry& e : config_schema()) {
        const std::string& text = v.at(e.key);
        YAML::Node value = e.kind == ValueKind::text ? YAML::Node(text) : parse_node(e.key, text);
        const auto dot = e.key.find('.');
        if (dot == std::string::npos) root[e.key] = value;
        else root[e.key.substr(0, dot)][e.key.substr(dot + 1)] = value;
    }
    YAML::Emitter out;
    out << root;
    return std::string(out.c_str()) + "\n";
}

}  // namespace lsast
