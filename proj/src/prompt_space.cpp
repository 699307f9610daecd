#include "lsast/prompt_space.hpp"

#include <cmath>

#include "lsast/error.hpp"
#include "lsast/ops.hpp"

namespace lsast {

std::string layer_name(Layer layer) {
    switch (layer) {
        case Layer::coarse: return "coarse";
        case Layer::moderate: return "moderate";
        case Layer::fine: return "fine";
    }
    return "?";
}

Layer parse_layer(const std::string& name) {
    for (Layer l : all_layers)
        if (layer_name(l) == name) return l;
    fail(ErrorKind::invalid_argument, "unknown layer '" + name + "'");
}

std::string orientation_name(StageOrientation o) {
    return o == StageOrientation::noise_level ? "noise_level" : "denoise_order";
}

StageOrientation parse_orientation(const std::string& name) {
    if (name == "noise_level") return StageOrientation::noise_level;
    if (name == "denoise_order") return StageOrientation::denoise_order;
    fail(ErrorKind::config, "stage_orientation must be noise_level or denoise_order, got '" + name + "'");
}

void PromptLayout::validate() const {
    require(stages >= 1, "prompt layout: stages must be positive");
    require(layers == 1 || layers == 3, "prompt layout: layers must be 1 or 3");
    require(timesteps >= 1 && timesteps % stages == 0,
            "prompt layout: timesteps " + std::to_string(timesteps) + " not divisible by stages " +
                std::to_string(stages));
}

int stage_of(const PromptLayout& layout, int t) {
    require(t >= 1 && t <= layout.timesteps,
            "timestep " + std::to_string(t) + " outside [1, " + std::to_string(layout.timesteps) + "]");
    // ceil(t * S / T) in integers
    const long long num = static_cast<long long>(t) * layout.stages;
    const int s = static_cast<int>((num + layout.timesteps - 1) / layout.timesteps);
    return layout.orientation == StageOrientation::noise_level ? s : layout.stages + 1 - s;
}

std::size_t cell_row(const PromptLayout& layout, int stage, Layer layer) {
    require(stage >= 1 && stage <= layout.stages, "stage " + std::to_string(stage) + " out of range");
    const int j = layout.layers == 1 ? 0 : static_cast<int>(layer) - 1;
    return static_cast<std::size_t>((stage - 1) * layout.layers + j);
}

PromptSeed PromptSeed::init(std::size_t tokens, std::size_t dim, Engine& rng) {
    require(tokens >= 1 && dim >= 2, "prompt seed needs at least one token and two features");
    PromptSeed s;
    s.prompt = Var::parameter(randn({1, dim}, rng, 0.02));
    s.f_scale = Var::parameter(Tensor({tokens}, 1.0));
    s.f_bias = Var::parameter(Tensor({tokens}, 0.0));
    s.g_scale = Var::parameter(Tensor({tokens}, 1.0));
    s.g_bias = Var::parameter(Tensor({tokens}, 0.0));
    s.h_scale = Var::parameter(Tensor({tokens}, 1.0));
    s.h_bias = Var::parameter(Tensor({tokens}, 0.0));
    return s;
}

std::vector<std::pair<std::string, Var>> PromptSeed::named_parameters() const {
    return {{"prompt.seed", prompt},     {"prompt.f.scale", f_scale}, {"prompt.f.bias", f_bias},
            {"prompt.g.scale", g_scale}, {"prompt.g.bias", g_bias},   {"prompt.h.scale", h_scale},
            {"prompt.h.bias", h_bias}};
}

void PromptSeed::set_requires_grad(bool on) {
    for (auto& [name, v] : named_parameters()) v.set_requires_grad(on);
}

void PromptSeed::validate() const {
    require(prompt.defined() && prompt.value().rank() == 2 && prompt.shape()[0] == 1,
            "prompt seed must be a single token row");
    require(prompt.value().all_finite(), "prompt seed has non-finite entries");
    const std::size_t n = tokens();
    for (const auto& [name, v] : named_parameters()) {
        if (name == "prompt.seed") continue;
        require(v.shape() == Shape{n}, name + " must have " + std::to_string(n) + " tokens");
        require(v.value().all_finite(), name + " has non-finite entries");
    }
}

Tensor normalize_seed(const Tensor& p) {
    require(p.rank() == 2 && p.dim(1) >= 2, "normalize_seed needs at least 2 feature columns");
    const std::size_t d = p.dim(1);
    Tensor out(p.shape());
    for (std::size_t r = 0; r < p.dim(0); ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += p.at(r, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (p.at(r, j) - mean) * (p.at(r, j) - mean);
        var /= static_cast<double>(d);
        if (!(var > 0.0)) fail(ErrorKind::numerical, "degenerate seed");
        const double rstd = 1.0 / std::sqrt(var);
        for (std::size_t j = 0; j < d; ++j) out.at(r, j) = (p.at(r, j) - mean) * rstd;
    }
    return out;
}

PromptSpace::PromptSpace(PromptLayout layout, Var table) : layout_(layout), table_(std::move(table)) {
    layout_.validate();
    require(table_.value().rank() == 2 && table_.shape()[0] == static_cast<std::size_t>(layout_.tokens()),
            "prompt table " + shape_str(table_.shape()) + " does not hold " + std::to_string(layout_.tokens()) +
                " tokens");
}

std::span<const double> PromptSpace::cell(int stage, Layer layer) const {
    const std::size_t d = dim();
    return table_.value().data().subspan(cell_row(layout_, stage, layer) * d, d);
}

std::span<const double> PromptSpace::route(int t, Layer layer) const { return cell(stage_of(layout_, t), layer); }

Var PromptSpace::route_batch(const std::vector<int>& timesteps, Layer layer) const {
    std::vector<std::size_t> rows;
    rows.reserve(timesteps.size());
    for (int t : timesteps) rows.push_back(cell_row(layout_, stage_of(layout_, t), layer));
    Var gathered = ops::gather_rows(table_, rows);
    return ops::reshape(gathered, {timesteps.size(), 1, dim()});
}

Tensor PromptSpace::grouped() const {
    return table_.value().reshaped(
        {static_cast<std::size_t>(layout_.stages), static_cast<std::size_t>(layout_.layers), dim()});
}

void PromptSpace::set_cell(int stage, Layer layer, std::span<const double> values) {
    require(values.size() == dim(), "set_cell: wrong feature count");
    const std::size_t row = cell_row(layout_, stage, layer);
    std::copy(values.begin(), values.end(), table_.mutable_value().ptr() + row * dim());
}

namespace {

Var attention(const PromptSeed& seed) {
    seed.validate();
    normalize_seed(seed.prompt.value());  // raises "degenerate seed" before building the graph
    Var normed = ops::normalize_rows(seed.prompt);
    Var q = ops::token_affine(normed, seed.f_scale, seed.f_bias);
    Var k = ops::token_affine(normed, seed.g_scale, seed.g_bias);
    return ops::softmax_rows(ops::matmul_nt(q, k));  // (N, N)
}

}  // namespace

Tensor expansion_attention(const PromptSeed& seed) {
    NoGradGuard no_grad;
    return attention(seed).value();
}

PromptSpace expand(const PromptSeed& seed, const PromptLayout& layout) {
    layout.validate();
    require(seed.tokens() == static_cast<std::size_t>(layout.tokens()),
            "prompt seed has " + std::to_string(seed.tokens()) + " tokens but the layout needs " +
                std::to_string(layout.tokens()));
    Var attn = attention(seed);
    Var v = ops::token_affine(seed.prompt, seed.h_scale, seed.h_bias);
    Var table = ops::matmul(attn, v);  // (N, D)
    if (!table.value().all_finite() || !attn.value().all_finite())
        fail(ErrorKind::numerical, "numerical overflow in expansion");
    return PromptSpace(layout, std::move(table));
}

PromptSpace null_prompt_space(const PromptLayout& layout, std::size_t dim) {
    return PromptSpace(layout, Var::constant(Tensor({static_cast<std::size_t>(layout.tokens()), dim})));
}

}  // namespace lsast
