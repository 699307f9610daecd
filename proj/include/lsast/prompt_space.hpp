#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lsast/autograd.hpp"
#include "lsast/rng.hpp"

namespace lsast {

// U-Net depth band a prompt is routed to.
enum class Layer { coarse = 1, moderate = 2, fine = 3 };

inline constexpr std::array<Layer, 3> all_layers{Layer::coarse, Layer::moderate, Layer::fine};

std::string layer_name(Layer layer);
Layer parse_layer(const std::string& name);

// noise_level: stage index grows with the noise level (t = T sits in stage S).
// denoise_order: stage 1 is the first stage visited while denoising.
enum class StageOrientation { noise_level, denoise_order };

std::string orientation_name(StageOrientation o);
StageOrientation parse_orientation(const std::string& name);

inline constexpr const char* grouping_order_name = "stage_major";

struct PromptLayout {
    int stages = 10;
    int layers = 3;  // 3 (one per band) or 1 (shared by every band)
    int timesteps = 1000;
    StageOrientation orientation = StageOrientation::noise_level;

    int tokens() const { return stages * layers; }
    int stage_len() const { return timesteps / stages; }
    void validate() const;
};

// 1-based stage for timestep t in [1, T].
int stage_of(const PromptLayout& layout, int t);

// Row of the (stage, layer) cell in the flattened (S*L, D) table. With a single
// layer every band shares row (stage - 1).
std::size_t cell_row(const PromptLayout& layout, int stage, Layer layer);

// Learnable generator of the prompt space: one D-dim prompt and three 1x1
// token convolutions (1 -> N channels), each a per-token scale and bias.
struct PromptSeed {
    Var prompt;  // (1, D)
    Var f_scale, f_bias;
    Var g_scale, g_bias;
    Var h_scale, h_bias;

    // prompt ~ 0.02 N(0, 1); scales 1, biases 0.
    static PromptSeed init(std::size_t tokens, std::size_t dim, Engine& rng);

    std::size_t dim() const { return prompt.shape().at(1); }
    std::size_t tokens() const { return f_scale.shape().at(0); }
    std::vector<std::pair<std::string, Var>> named_parameters() const;
    void set_requires_grad(bool on);
    void validate() const;
};

// Zero mean, unit population variance across features. Throws "degenerate seed"
// for a constant row.
Tensor normalize_seed(const Tensor& p);

// Flattened (S*L, D) prompt table plus its layout.
class PromptSpace {
public:
    PromptSpace(PromptLayout layout, Var table);

    const PromptLayout& layout() const { return layout_; }
    std::size_t dim() const { return table_.shape()[1]; }
    const Var& table() const { return table_; }

    std::span<const double> cell(int stage, Layer layer) const;
    std::span<const double> route(int t, Layer layer) const;

    // Context tokens (B, 1, D) for a batch of timesteps; differentiable w.r.t. the table.
    Var route_batch(const std::vector<int>& timesteps, Layer layer) const;

    // (S, L, D) view of the table.
    Tensor grouped() const;

    // Overwrites one cell; used by tests and tooling.
    void set_cell(int stage, Layer layer, std::span<const double> values);

private:
    PromptLayout layout_;
    Var table_;
};

// Self-attention expansion of the seed into the prompt space.
PromptSpace expand(const PromptSeed& seed, const PromptLayout& layout);

// Row-stochastic (N, N) attention matrix used by expand.
Tensor expansion_attention(const PromptSeed& seed);

// Prompt space with every cell equal to the all-zeros token.
PromptSpace null_prompt_space(const PromptLayout& layout, std::size_t dim);

}  // namespace lsast
