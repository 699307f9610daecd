#pragma once

#include <string>

#include "lsast/autograd.hpp"
#include "lsast/rng.hpp"
#include "lsast/unet.hpp"

namespace lsast {

// Binary edge image (H, W) with values in {0, 1} plus the absolute hysteresis
// thresholds that produced it.
struct EdgeMap {
    Tensor edges;
    double low = 0.0;
    double high = 0.0;

    std::size_t height() const { return edges.dim(0); }
    std::size_t width() const { return edges.dim(1); }
    std::size_t count() const;
};

enum class ThresholdMode { absolute, relative_to_max };

struct CannyOptions {
    double low = 0.1;
    double high = 0.2;
    double sigma = 1.4;
    ThresholdMode mode = ThresholdMode::relative_to_max;
};

// Luma (H, W) from a (3, H, W) image with values in [0, 1].
Tensor to_grayscale(const Tensor& rgb);

// Gradient magnitude after Gaussian blur and 3x3 Sobel, replicate borders.
Tensor gradient_magnitude(const Tensor& gray, double sigma);

// Blur, Sobel, 4-direction non-maximum suppression, 8-connected hysteresis.
EdgeMap canny(const Tensor& gray, const CannyOptions& options = {});

// Zero-initialized side encoder turning an edge map into one residual feature
// map per depth band, shaped like the backbone's band features.
class ContentBranch {
public:
    ContentBranch(const BackboneConfig& backbone, Engine& init_rng);
    ContentBranch(const ContentBranch&) = delete;
    ContentBranch& operator=(const ContentBranch&) = delete;
    ContentBranch(ContentBranch&&) = default;
    ContentBranch& operator=(ContentBranch&&) = default;

    const NamedParams& parameters() const { return params_; }
    void set_requires_grad(bool on);
    bool projections_zero() const;

    // edges (B, 1, H, W); residuals multiplied by `strength`.
    BandTensors encode(const Var& edges, double strength = 1.0) const;

private:
    Var param(const std::string& name, Tensor init);

    BackboneConfig backbone_;
    NamedParams params_;
    Var conv0_w_, conv0_b_, conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
    Var proj_w_[3], proj_b_[3];  // fine, moderate, coarse
};

// (H, W) edge map -> (1, 1, H, W) branch input.
Tensor edge_input(const EdgeMap& edges);

BandTensors encode_content(const ContentBranch& branch, const EdgeMap& edges, double strength = 1.0);

}  // namespace lsast
