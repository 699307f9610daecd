#pragma once

#include <functional>
#include <vector>

#include "lsast/prompt_space.hpp"
#include "lsast/schedule.hpp"
#include "lsast/unet.hpp"

namespace lsast {

// Content residuals for the step at timestep t.
using ResidualFn = std::function<BandTensors(int t)>;

// Routed context tokens (B, 1, D) for every band.
BandTensors band_context(const PromptSpace& space, const std::vector<int>& timesteps);

// Ancestral sampling from z_{t0} down to z_0, clamped to [-1, 1]. init is
// (B, C, H, W); element b draws its step noise from rngs[b] only.
Tensor sample(const Backbone& backbone, const NoiseSchedule& schedule, const PromptSpace& space, const Tensor& init,
              int t0, const ResidualFn& residuals, std::vector<Engine>& rngs);

}  // namespace lsast
