#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lsast/autograd.hpp"
#include "lsast/prompt_space.hpp"
#include "lsast/rng.hpp"

namespace lsast {

using NamedParams = std::vector<std::pair<std::string, Var>>;

struct BackboneConfig {
    int image_channels = 3;
    int resolution = 64;
    // Widths of the three resolution levels, highest resolution first.
    std::vector<int> channels{8, 16, 32};
    int res_blocks = 2;
    int norm_groups = 4;
    int context_dim = 768;
    int time_dim = 32;
    // Also add content residuals to encoder features (decoder skips always receive them).
    bool inject_encoder = false;

    void validate() const;
};

// One tensor per depth band.
struct BandTensors {
    Var coarse, moderate, fine;

    Var& operator[](Layer l);
    const Var& operator[](Layer l) const;
};

struct BlockEvent {
    int block_id;
    const std::string& name;
    Layer band;
    const Tensor& context;
    const Tensor& input;
    const Tensor& output;
};

using BlockObserver = std::function<void(const BlockEvent&)>;

// Level 0 is the highest resolution (fine band), level 2 the lowest (coarse band).
Layer band_of_level(int level);

// Toy U-Net noise predictor: three resolution levels, residual blocks with a
// timestep embedding, and one cross-attention block per level on the encoder
// and decoder plus the bottleneck. Each attention block reads the context
// tokens of its band.
class Backbone {
public:
    Backbone(BackboneConfig config, Engine& init_rng);
    // Parameters are shared handles; copying would alias weights.
    Backbone(const Backbone&) = delete;
    Backbone& operator=(const Backbone&) = delete;
    Backbone(Backbone&&) = default;
    Backbone& operator=(Backbone&&) = default;

    // Copies every parameter value from a backbone with the same configuration.
    void copy_weights_from(const Backbone& other);

    const BackboneConfig& config() const { return config_; }
    const NamedParams& parameters() const { return params_; }
    void set_requires_grad(bool on);
    std::size_t parameter_count() const;

    // z_t (B, C, H, W); one timestep per element; ctx[band] (B, M, D);
    // residuals[band] shaped like band_feature_shape(band, B) when given.
    Var predict_noise(const Var& z_t, const std::vector<int>& t, const BandTensors& ctx,
                      const BandTensors* residuals = nullptr) const;

    Shape band_feature_shape(Layer band, std::size_t batch) const;

    // (block name, band) for every cross-attention block in forward order.
    std::vector<std::pair<std::string, Layer>> layer_group_map() const;

    void set_observer(BlockObserver observer) { observer_ = std::move(observer); }

private:
    struct ResBlock {
        Var norm1_g, norm1_b, conv1_w, conv1_b, temb_w, temb_b, norm2_g, norm2_b, conv2_w, conv2_b, skip_w, skip_b;
    };
    struct AttnBlock {
        int id;
        std::string name;
        Layer band;
        Var wq, wk, wv, wo, bo;
    };

    Var param(const std::string& name, Tensor init);
    Var conv_weight(const std::string& name, int cout, int cin, int k, Engine& rng, double gain);
    ResBlock make_res(const std::string& name, int cin, int cout, Engine& rng);
    AttnBlock make_attn(const std::string& name, int channels, Layer band, Engine& rng);

    Var res_forward(const ResBlock& b, const Var& x, const Var& temb_act) const;
    Var attn_forward(const AttnBlock& b, const Var& h, const BandTensors& ctx) const;

    BackboneConfig config_;
    NamedParams params_;

    Var in_conv_w_, in_conv_b_;
    Var time_w1_, time_b1_, time_w2_, time_b2_;
    std::vector<std::vector<ResBlock>> enc_res_;
    std::vector<AttnBlock> enc_attn_;
    ResBlock mid_res1_, mid_res2_;
    AttnBlock mid_attn_;
    std::vector<std::vector<ResBlock>> dec_res_;  // indexed by level
    std::vector<AttnBlock> dec_attn_;             // indexed by level
    Var out_norm_g_, out_norm_b_, out_conv_w_, out_conv_b_;

    int attn_count_ = 0;
    BlockObserver observer_;
};

// Sinusoidal embedding (B, dim) of integer timesteps.
Tensor timestep_embedding(const std::vector<int>& t, int dim);

}  // namespace lsast
