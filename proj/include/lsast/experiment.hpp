#pragma once

#include <string>
#include <vector>

#include "lsast/config.hpp"
#include "lsast/model.hpp"
#include "lsast/trainer.hpp"

namespace lsast {

// Loads every image of a folder, resized to res x res, scaled to [-1, 1].
std::vector<Tensor> load_folder(const std::string& dir, int res);

// Style set: data.style_dir when set, else the procedural collection data.style.
StyleDataset style_dataset(const ExperimentConfig& config);
StyleDataset style_dataset(const ExperimentConfig& config, const std::string& toy_style);

// Content images in [0, 1]: data.content_dir when set, else procedural photos.
std::vector<Tensor> content_images(const ExperimentConfig& config);

// Generic photos under the null caption plus captioned concept collections.
StyleDataset pretrain_dataset(const ExperimentConfig& config);

struct PretrainResult {
    TrainResult backbone;
    TrainResult branch;
};

// Fits the backbone (full_finetune, captions when available) and then the
// content branch (content_branch mode on the generic photos and their edges).
PretrainResult pretrain(Model& model, const ExperimentConfig& config, const LossSink& backbone_sink = {},
                        const LossSink& branch_sink = {});

// Prompt inversion (or the full_finetune baseline) per config.train.
TrainResult train_prompts(Model& model, const ExperimentConfig& config, const StyleDataset& dataset,
                          const LossSink& sink = {});

// "step,loss,lr" CSV text.
std::string loss_csv(const std::vector<LossRecord>& losses);

}  // namespace lsast
