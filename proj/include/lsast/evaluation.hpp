#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsast/autograd.hpp"
#include "lsast/config.hpp"
#include "lsast/model.hpp"

namespace lsast {

struct FeatureSet {
    Eigen::MatrixXd features;  // n samples x d
    std::string extractor_id;
};

// Fixed random convolutional network with global average pooling. Stands in
// for a pretrained classifier, so scores only compare runs of one extractor.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed = 0, int dim = 64, int input_resolution = 64);

    // Identifier including a hash of the weights.
    const std::string& id() const { return id_; }
    int dim() const { return dim_; }

    // One row per image; images are (3, H, W) in [0, 1] and resized to the input resolution.
    FeatureSet extract(const std::vector<Tensor>& images) const;

private:
    int dim_, resolution_;
    std::array<Var, 3> weights_, biases_;
    std::string id_;
};

// Frechet distance between Gaussians fitted to two feature sets. Covariances
// are unbiased and get 1e-6 I added when n <= d.
double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double fid(const FeatureSet& a, const FeatureSet& b);

enum class AblationVariant { full, no_content, no_step_and_layer, no_step, no_layer };

const std::array<AblationVariant, 5>& all_variants();
std::string variant_name(AblationVariant v);

// Prompt layout of a variant; only the stage and layer counts change.
PromptLayout variant_layout(AblationVariant v, const PromptLayout& base);
double variant_content_strength(AblationVariant v, double base);

struct AblationRow {
    std::string style;
    AblationVariant variant;
    int stages = 0, layers = 0;
    std::size_t prompt_cells = 0;
    std::size_t seed_parameters = 0;
    double final_loss = 0.0;  // mean of the last (up to) 100 training losses
    double fid = 0.0;
    bool ok = false;
    std::string error;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    bool complete = false;
    std::string extractor_id;
    std::vector<std::string> notes;
};

using AblationProgress = std::function<void(const std::string& style, AblationVariant v)>;

// Trains every variant's prompts against the (frozen) model backbone for
// config.ablate.steps, stylizes the content set and scores it against the style set.
AblationReport run_ablations(const ExperimentConfig& config, const Model& base, const AblationProgress& progress = {});

std::string report_csv(const AblationReport& report);
std::string report_table(const AblationReport& report);

}  // namespace lsast
