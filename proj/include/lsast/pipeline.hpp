#pragma once

#include <cstdint>
#include <filesystem>

#include "lsast/content.hpp"
#include "lsast/model.hpp"

namespace lsast {

struct StylizeRequest {
    std::filesystem::path content;
    std::filesystem::path checkpoint;
    std::filesystem::path output;
    double strength = 0.8;  // tau
    double content_strength = 1.0;
    std::uint64_t seed = 0;
    int resolution = 0;  // 0: the checkpoint's resolution
    CannyOptions canny;

    // Config errors name the offending field (strength, content_strength, resolution).
    void validate() const;
};

// t0 = round(tau * T).
int start_timestep(double tau, int timesteps);

// Stylizes content images (3, H, W) in [0, 1], all at the model resolution.
// Returns (B, 3, H, W) in [-1, 1]. With tau = 0 the content passes through
// unchanged. Image i draws its noise from the streams "stylize.noise.<i>" and
// "stylize.sampler.<i>", so outputs do not depend on batch composition.
Tensor stylize_batch(const Model& model, const std::vector<Tensor>& contents, double tau, double content_strength,
                     const CannyOptions& canny, std::uint64_t seed);

// Loads, resizes, stylizes and writes the PNG. Returns the written image (3, H, W) in [0, 1].
Tensor stylize(const StylizeRequest& request);

}  // namespace lsast
