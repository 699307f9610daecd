#include "lsast/unet.hpp"

#include <cmath>

#include "lsast/error.hpp"
#include "lsast/ops.hpp"

namespace lsast {

void BackboneConfig::validate() const {
    require(image_channels >= 1, "backbone: image_channels must be positive");
    require(channels.size() == 3, "backbone: exactly three channel widths required");
    require(resolution >= 4 && resolution % 4 == 0, "backbone: resolution must be a positive multiple of 4");
    require(res_blocks >= 1, "backbone: res_blocks must be at least 1");
    require(context_dim >= 1, "backbone: context_dim must be positive");
    require(time_dim >= 2 && time_dim % 2 == 0, "backbone: time_dim must be even");
    for (int c : channels)
        require(c >= 1 && norm_groups >= 1 && c % norm_groups == 0,
                "backbone: channel width " + std::to_string(c) + " not divisible by norm_groups");
}

Var& BandTensors::operator[](Layer l) {
    switch (l) {
        case Layer::coarse: return coarse;
        case Layer::moderate: return moderate;
        case Layer::fine: return fine;
    }
    return fine;
}

const Var& BandTensors::operator[](Layer l) const { return const_cast<BandTensors&>(*this)[l]; }

Layer band_of_level(int level) {
    switch (level) {
        case 0: return Layer::fine;
        case 1: return Layer::moderate;
        default: return Layer::coarse;
    }
}

Tensor timestep_embedding(const std::vector<int>& t, int dim) {
    const std::size_t half = static_cast<std::size_t>(dim / 2);
    Tensor out({t.size(), static_cast<std::size_t>(dim)});
    for (std::size_t n = 0; n < t.size(); ++n)
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            out.at(n, i) = std::sin(t[n] * freq);
            out.at(n, half + i) = std::cos(t[n] * freq);
        }
    return out;
}

Var Backbone::param(const std::string& name, Tensor init) {
    Var v = Var::parameter(std::move(init));
    params_.emplace_back(name, v);
    return v;
}

Var Backbone::conv_weight(const std::string& name, int cout, int cin, int k, Engine& rng, double gain) {
    const double std = gain / std::sqrt(static_cast<double>(cin * k * k));
    return param(name, randn({static_cast<std::size_t>(cout), static_cast<std::size_t>(cin),
                              static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                             rng, std));
}

Backbone::ResBlock Backbone::make_res(const std::string& name, int cin, int cout, Engine& rng) {
    const auto ci = static_cast<std::size_t>(cin), co = static_cast<std::size_t>(cout);
    const auto temb = static_cast<std::size_t>(2 * config_.time_dim);
    ResBlock b;
    b.norm1_g = param(name + ".norm1.gamma", Tensor({ci}, 1.0));
    b.norm1_b = param(name + ".norm1.beta", Tensor({ci}));
    b.conv1_w = conv_weight(name + ".conv1.weight", cout, cin, 3, rng, 1.0);
    b.conv1_b = param(name + ".conv1.bias", Tensor({co}));
    b.temb_w = param(name + ".temb.weight", randn({co, temb}, rng, 1.0 / std::sqrt(static_cast<double>(temb))));
    b.temb_b = param(name + ".temb.bias", Tensor({co}));
    b.norm2_g = param(name + ".norm2.gamma", Tensor({co}, 1.0));
    b.norm2_b = param(name + ".norm2.beta", Tensor({co}));
    b.conv2_w = conv_weight(name + ".conv2.weight", cout, cout, 3, rng, 0.2);
    b.conv2_b = param(name + ".conv2.bias", Tensor({co}));
    if (cin != cout) {
        b.skip_w = conv_weight(name + ".skip.weight", cout, cin, 1, rng, 1.0);
        b.skip_b = param(name + ".skip.bias", Tensor({co}));
    }
    return b;
}

Backbone::AttnBlock Backbone::make_attn(const std::string& name, int channels, Layer band, Engine& rng) {
    const auto c = static_cast<std::size_t>(channels), d = static_cast<std::size_t>(config_.context_dim);
    AttnBlock b;
    b.id = attn_count_++;
    b.name = name;
    b.band = band;
    const double ctx_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double feat_std = 1.0 / std::sqrt(static_cast<double>(c));
    b.wq = param(name + ".to_q", randn({c, c}, rng, feat_std));
    b.wk = param(name + ".to_k", randn({c, d}, rng, ctx_std));
    b.wv = param(name + ".to_v", randn({c, d}, rng, ctx_std));
    b.wo = param(name + ".to_out.weight", randn({c, c}, rng, feat_std));
    b.bo = param(name + ".to_out.bias", Tensor({c}));
    return b;
}

Backbone::Backbone(BackboneConfig config, Engine& init_rng) : config_(std::move(config)) {
    config_.validate();
    Engine& rng = init_rng;
    const auto& ch = config_.channels;
    const auto temb = static_cast<std::size_t>(2 * config_.time_dim);
    const auto tdim = static_cast<std::size_t>(config_.time_dim);

    in_conv_w_ = conv_weight("unet.in.weight", ch[0], config_.image_channels, 3, rng, 1.0);
    in_conv_b_ = param("unet.in.bias", Tensor({static_cast<std::size_t>(ch[0])}));
    time_w1_ = param("unet.time.fc1.weight", randn({temb, tdim}, rng, 1.0 / std::sqrt(static_cast<double>(tdim))));
    time_b1_ = param("unet.time.fc1.bias", Tensor({temb}));
    time_w2_ = param("unet.time.fc2.weight", randn({temb, temb}, rng, 1.0 / std::sqrt(static_cast<double>(temb))));
    time_b2_ = param("unet.time.fc2.bias", Tensor({temb}));

    int cin = ch[0];
    for (int level = 0; level < 3; ++level) {
        const std::string base = "unet.enc" + std::to_string(level);
        std::vector<ResBlock> blocks;
        for (int r = 0; r < config_.res_blocks; ++r) {
            blocks.push_back(make_res(base + ".res" + std::to_string(r), cin, ch[level], rng));
            cin = ch[level];
        }
        enc_res_.push_back(std::move(blocks));
        enc_attn_.push_back(make_attn(base + ".attn", ch[level], band_of_level(level), rng));
    }

    mid_res1_ = make_res("unet.mid.res0", ch[2], ch[2], rng);
    mid_attn_ = make_attn("unet.mid.attn", ch[2], Layer::coarse, rng);
    mid_res2_ = make_res("unet.mid.res1", ch[2], ch[2], rng);

    dec_res_.resize(3);
    dec_attn_.resize(3);
    cin = ch[2];
    for (int level = 2; level >= 0; --level) {
        const std::string base = "unet.dec" + std::to_string(level);
        int in = cin + ch[level];
        for (int r = 0; r < config_.res_blocks; ++r) {
            dec_res_[level].push_back(make_res(base + ".res" + std::to_string(r), in, ch[level], rng));
            in = ch[level];
        }
        dec_attn_[level] = make_attn(base + ".attn", ch[level], band_of_level(level), rng);
        cin = ch[level];
    }

    out_norm_g_ = param("unet.out.norm.gamma", Tensor({static_cast<std::size_t>(ch[0])}, 1.0));
    out_norm_b_ = param("unet.out.norm.beta", Tensor({static_cast<std::size_t>(ch[0])}));
    out_conv_w_ = conv_weight("unet.out.weight", config_.image_channels, ch[0], 3, rng, 0.1);
    out_conv_b_ = param("unet.out.bias", Tensor({static_cast<std::size_t>(config_.image_channels)}));
}

void Backbone::set_requires_grad(bool on) {
    for (auto& [name, v] : params_) v.set_requires_grad(on);
}

void Backbone::copy_weights_from(const Backbone& other) {
    require(other.params_.size() == params_.size(), "copy_weights_from: parameter lists differ");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        require(params_[i].first == other.params_[i].first && params_[i].second.shape() == other.params_[i].second.shape(),
                "copy_weights_from: mismatch at " + params_[i].first);
        params_[i].second.mutable_value() = other.params_[i].second.value();
    }
}

std::size_t Backbone::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v.value().size();
    return n;
}

Shape Backbone::band_feature_shape(Layer band, std::size_t batch) const {
    const int level = band == Layer::fine ? 0 : band == Layer::moderate ? 1 : 2;
    const auto side = static_cast<std::size_t>(config_.resolution >> level);
    return {batch, static_cast<std::size_t>(config_.channels[level]), side, side};
}

std::vector<std::pair<std::string, Layer>> Backbone::layer_group_map() const {
    std::vector<std::pair<std::string, Layer>> out;
    for (const auto& b : enc_attn_) out.emplace_back(b.name, b.band);
    out.emplace_back(mid_attn_.name, mid_attn_.band);
    for (int level = 2; level >= 0; --level) out.emplace_back(dec_attn_[level].name, dec_attn_[level].band);
    return out;
}

Var Backbone::res_forward(const ResBlock& b, const Var& x, const Var& temb_act) const {
    const int g = config_.norm_groups;
    Var h = ops::conv2d(ops::silu(ops::group_norm(x, b.norm1_g, b.norm1_b, g)), b.conv1_w, b.conv1_b, 1, 1);
    h = ops::add_channel_bias(h, ops::linear(temb_act, b.temb_w, b.temb_b));
    h = ops::conv2d(ops::silu(ops::group_norm(h, b.norm2_g, b.norm2_b, g)), b.conv2_w, b.conv2_b, 1, 1);
    Var skip = b.skip_w.defined() ? ops::conv2d(x, b.skip_w, b.skip_b, 1, 0) : x;
    return ops::add(skip, h);
}

Var Backbone::attn_forward(const AttnBlock& b, const Var& h, const BandTensors& ctx) const {
    const Var& c = ctx[b.band];
    require(c.defined(), "predict_noise: missing " + layer_name(b.band) + " prompt");
    require(c.value().rank() == 3 && c.shape()[0] == h.shape()[0] &&
                c.shape()[2] == static_cast<std::size_t>(config_.context_dim),
            "predict_noise: " + layer_name(b.band) + " prompt has shape " + shape_str(c.shape()));
    Var out = ops::add(h, ops::cross_attention(h, c, b.wq, b.wk, b.wv, b.wo, b.bo));
    if (observer_) observer_(BlockEvent{b.id, b.name, b.band, c.value(), h.value(), out.value()});
    return out;
}

Var Backbone::predict_noise(const Var& z_t, const std::vector<int>& t, const BandTensors& ctx,
                            const BandTensors* residuals) const {
    const std::size_t batch = z_t.shape().at(0);
    require(z_t.value().rank() == 4 && z_t.shape()[1] == static_cast<std::size_t>(config_.image_channels) &&
                z_t.shape()[2] == static_cast<std::size_t>(config_.resolution) &&
                z_t.shape()[3] == static_cast<std::size_t>(config_.resolution),
            "predict_noise: latent " + shape_str(z_t.shape()) + " does not match the backbone configuration");
    require(t.size() == batch, "predict_noise: one timestep per batch element required");
    if (residuals) {
        for (Layer band : all_layers) {
            const Var& r = (*residuals)[band];
            require(!r.defined() || r.shape() == band_feature_shape(band, batch),
                    "predict_noise: " + layer_name(band) + " residual has shape " +
                        (r.defined() ? shape_str(r.shape()) : std::string()) + ", expected " +
                        shape_str(band_feature_shape(band, batch)));
        }
    }
    auto residual = [&](Layer band) -> const Var* {
        if (!residuals) return nullptr;
        const Var& r = (*residuals)[band];
        return r.defined() ? &r : nullptr;
    };

    Var temb = ops::linear(Var::constant(timestep_embedding(t, config_.time_dim)), time_w1_, time_b1_);
    temb = ops::linear(ops::silu(temb), time_w2_, time_b2_);
    Var temb_act = ops::silu(temb);

    Var h = ops::conv2d(z_t, in_conv_w_, in_conv_b_, 1, 1);
    std::vector<Var> skips;
    for (int level = 0; level < 3; ++level) {
        for (const auto& b : enc_res_[level]) h = res_forward(b, h, temb_act);
        h = attn_forward(enc_attn_[level], h, ctx);
        if (config_.inject_encoder) {
            if (const Var* r = residual(band_of_level(level))) h = ops::add(h, *r);
        }
        skips.push_back(h);
        if (level < 2) h = ops::avg_pool2(h);
    }

    h = res_forward(mid_res1_, h, temb_act);
    h = attn_forward(mid_attn_, h, ctx);
    h = res_forward(mid_res2_, h, temb_act);

    for (int level = 2; level >= 0; --level) {
        Var skip = skips[level];
        if (const Var* r = residual(band_of_level(level))) skip = ops::add(skip, *r);
        h = ops::concat_channels(h, skip);
        for (const auto& b : dec_res_[level]) h = res_forward(b, h, temb_act);
        h = attn_forward(dec_attn_[level], h, ctx);
        if (level > 0) h = ops::upsample_nearest2(h);
    }

    h = ops::silu(ops::group_norm(h, out_norm_g_, out_norm_b_, config_.norm_groups));
    return ops::conv2d(h, out_conv_w_, out_conv_b_, 1, 1);
}

}  // namespace lsast
