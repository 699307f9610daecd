#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsast/checkpoint.hpp"
#include "lsast/config.hpp"
#include "lsast/content.hpp"
#include "lsast/prompt_space.hpp"
#include "lsast/schedule.hpp"
#include "lsast/trainer.hpp"
#include "lsast/unet.hpp"

namespace lsast {

// Everything a stylization needs: backbone, content branch, prompt seed and
// the diffusion settings they were trained under.
struct Model {
    PromptLayout layout;
    BackboneConfig backbone_config;
    double beta_start = 1e-4, beta_end = 0.02;
    VarianceKind variance = VarianceKind::posterior;
    Backbone backbone;
    ContentBranch branch;
    PromptSeed seed;

    NoiseSchedule schedule() const;
    PromptSpace prompts() const { return expand(seed, layout); }
};

// Fresh model. Backbone, branch and seed draw from the streams "init.backbone",
// "init.branch" and "init.prompt" of the master seed, so the backbone does not
// depend on the prompt layout.
Model make_model(const ExperimentConfig& config, std::uint64_t master_seed);

// Deep copy: fresh parameter handles holding the same values.
Model clone_model(const Model& model);

// Replaces the prompt layout and re-initializes the seed; backbone and branch are kept.
void reset_prompts(Model& model, const PromptLayout& layout, std::uint64_t master_seed);

// Loss summary stored with checkpoints.
struct LossSummary {
    int steps = 0;
    double first_window = 0.0;  // mean over steps 1..100 (or fewer)
    double last_window = 0.0;   // mean over the final 100 steps
    double final_loss = 0.0;
};
LossSummary summarize(const std::vector<LossRecord>& losses);

struct ModelProvenance {
    std::string kind;         // "backbone" or "prompts"
    std::string config_yaml;  // resolved config echo
    std::uint64_t seed = 0;
    std::optional<LossSummary> losses;
    std::map<std::string, std::string> rng_state;
};

Checkpoint to_checkpoint(const Model& model, const ModelProvenance& provenance);
Model model_from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::filesystem::path& path, const Model& model, const ModelProvenance& provenance);
Model load_model(const std::filesystem::path& path);

}  // namespace lsast
