#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lsast/content.hpp"
#include "lsast/prompt_space.hpp"
#include "lsast/schedule.hpp"
#include "lsast/unet.hpp"

namespace lsast {

// prompt_inversion: only the prompt seed learns, against a frozen backbone.
// full_finetune: only the backbone learns, under the all-zeros null prompt.
// content_branch: only the content branch learns, backbone frozen, null prompt.
enum class TrainMode { prompt_inversion, full_finetune, content_branch };
enum class OptimizerKind { sgd_momentum, adam };
// uniform: independent draws per element. stratified: a golden-ratio sequence
// with a random offset, so every element is still marginally uniform but any
// window of consecutive draws covers [1, T] evenly.
enum class TimestepSampling { uniform, stratified };

std::string mode_name(TrainMode m);
TrainMode parse_mode(const std::string& s);
std::string optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);
std::string sampling_name(TimestepSampling k);
TimestepSampling parse_sampling(const std::string& s);

struct TrainConfig {
    double lr = 1e-3;
    double decay = 0.1;
    int decay_step = 2000;
    int total_steps = 10000;
    int batch_size = 4;
    int resolution = 64;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::prompt_inversion;
    OptimizerKind optimizer = OptimizerKind::sgd_momentum;
    double momentum = 0.9;
    TimestepSampling sampling = TimestepSampling::uniform;
    int log_every = 100;

    void validate() const;
    // Step-decayed learning rate for 1-based step s.
    double lr_at(int step) const;
};

// Images (3, H, W) in [-1, 1]; edges (H, W) are filled for content-branch training.
// captions, when present, hold one (D) context vector per image and replace the
// null prompt during full_finetune (captioned backbone pretraining).
struct StyleDataset {
    std::vector<Tensor> images;
    std::vector<Tensor> edges;
    std::vector<Tensor> captions;

    void validate() const;
    std::size_t size() const { return images.size(); }
    Tensor batch(const std::vector<std::size_t>& idx) const;
    Tensor edge_batch(const std::vector<std::size_t>& idx) const;
    Tensor caption_batch(const std::vector<std::size_t>& idx) const;
};

struct StepBatch {
    Tensor images;           // (B, C, H, W)
    std::vector<int> t;      // one timestep per element
    Tensor eps;              // same shape as images
    Tensor edges;            // (B, 1, H, W), content_branch mode only
    Tensor captions;         // (B, 1, D), optional, full_finetune mode only
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct StepResult {
    double loss = 0.0;
    NamedTensors gradients;
};

// Noise predictor signature; lets tests substitute analytic stubs for the U-Net.
using Denoiser = std::function<Var(const Var& z_t, const std::vector<int>& t, const BandTensors& ctx)>;

// Mean squared error between eps and the prediction on the noised batch.
Var denoising_loss(const Denoiser& denoiser, const NoiseSchedule& schedule, const StepBatch& batch,
                   const BandTensors& ctx);

// One forward/backward pass. Gradients are accumulated into (and returned for)
// the trainable set of the given mode only.
StepResult training_step(TrainMode mode, PromptSeed& seed, const PromptLayout& layout, Backbone& backbone,
                         const NoiseSchedule& schedule, const StepBatch& batch, int step_index = 0,
                         ContentBranch* branch = nullptr);

// Prompt-inversion step against an arbitrary predictor.
StepResult training_step(const Denoiser& denoiser, PromptSeed& seed, const PromptLayout& layout,
                         const NoiseSchedule& schedule, const StepBatch& batch, int step_index = 0);

class Optimizer {
public:
    Optimizer(OptimizerKind kind, double momentum = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // Updates every parameter that holds a gradient.
    void step(const NamedParams& params, double lr);

private:
    OptimizerKind kind_;
    double momentum_, beta2_, eps_;
    long steps_ = 0;
    std::map<std::string, Tensor> first_, second_;
};

struct LossRecord {
    int step;
    double loss;
    double lr;
};

using LossSink = std::function<void(const LossRecord&)>;

struct TrainResult {
    std::vector<LossRecord> losses;
    // Final states of the labeled data streams ("batch", "timestep", "noise").
    std::map<std::string, std::string> rng_state;
};

// Runs config.total_steps optimizer steps over the trainable set of config.mode.
TrainResult train(const TrainConfig& config, const StyleDataset& dataset, PromptSeed& seed, const PromptLayout& layout,
                  Backbone& backbone, const NoiseSchedule& schedule, ContentBranch* branch = nullptr,
                  const LossSink& sink = {});

// Fixed N(0, 1) context vector standing in for a text embedding of `label`.
Tensor caption_embedding(const std::string& label, std::size_t dim, std::uint64_t seed);

// Mean loss of records [begin, end).
double mean_loss(const std::vector<LossRecord>& losses, std::size_t begin, std::size_t end);

// Trainable parameters for a mode.
NamedParams trainable_parameters(TrainMode mode, const PromptSeed& seed, const Backbone& backbone,
                                 const ContentBranch* branch);

// Sets requires_grad on every parameter according to the mode's trainable set.
void configure_trainable(TrainMode mode, PromptSeed& seed, Backbone& backbone, ContentBranch* branch);

}  // namespace lsast
