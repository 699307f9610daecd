#include "lsast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "lsast/error.hpp"
#include "lsast/ops.hpp"
#include "lsast/sampler.hpp"

namespace lsast {

std::string mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::prompt_inversion: return "prompt_inversion";
        case TrainMode::full_finetune: return "full_finetune";
        case TrainMode::content_branch: return "content_branch";
    }
    return "?";
}

TrainMode parse_mode(const std::string& s) {
    for (TrainMode m : {TrainMode::prompt_inversion, TrainMode::full_finetune, TrainMode::content_branch})
        if (mode_name(m) == s) return m;
    fail(ErrorKind::config, "train.mode must be prompt_inversion, full_finetune or content_branch, got '" + s + "'");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
    fail(ErrorKind::config, "train.optimizer must be sgd_momentum or adam, got '" + s + "'");
}

std::string sampling_name(TimestepSampling k) { return k == TimestepSampling::uniform ? "uniform" : "stratified"; }

TimestepSampling parse_sampling(const std::string& s) {
    if (s == "uniform") return TimestepSampling::uniform;
    if (s == "stratified") return TimestepSampling::stratified;
    fail(ErrorKind::config, "train.timestep_sampling must be uniform or stratified, got '" + s + "'");
}

void TrainConfig::validate() const {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) fail(ErrorKind::config, what);
    };
    check(lr > 0.0 && std::isfinite(lr), "train.lr must be positive");
    check(decay > 0.0 && decay <= 1.0, "train.decay must be in (0, 1]");
    check(total_steps >= 0, "train.total_steps must be non-negative");
    check(decay_step >= 0 && (total_steps == 0 || decay_step < total_steps) , "train.decay_step must be below train.total_steps");
    check(batch_size >= 1, "train.batch_size must be positive");
    check(resolution >= 4, "train.resolution too small");
    check(momentum >= 0.0 && momentum < 1.0, "train.momentum must be in [0, 1)");
    check(log_every >= 1, "train.log_every must be positive");
}

double TrainConfig::lr_at(int step) const { return step <= decay_step ? lr : lr * decay; }

void StyleDataset::validate() const {
    require(!images.empty(), "style dataset is empty");
    for (const Tensor& img : images)
        require(img.shape() == images.front().shape(), "style dataset images differ in shape");
    require(edges.empty() || edges.size() == images.size(), "style dataset: one edge map per image required");
    require(captions.empty() || captions.size() == images.size(), "style dataset: one caption per image required");
    for (const Tensor& c : captions) require(c.rank() == 1 && c.shape() == captions.front().shape(), "style dataset: captions must be equal-length vectors");
}

Tensor StyleDataset::batch(const std::vector<std::size_t>& idx) const {
    const Shape& s = images.front().shape();
    Tensor out({idx.size(), s[0], s[1], s[2]});
    const std::size_t per = images.front().size();
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(images.at(idx[i]).ptr(), per, out.ptr() + i * per);
    return out;
}

Tensor StyleDataset::edge_batch(const std::vector<std::size_t>& idx) const {
    require(!edges.empty(), "style dataset has no edge maps");
    const Shape& s = edges.front().shape();
    Tensor out({idx.size(), 1, s[0], s[1]});
    const std::size_t per = edges.front().size();
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(edges.at(idx[i]).ptr(), per, out.ptr() + i * per);
    return out;
}

Tensor StyleDataset::caption_batch(const std::vector<std::size_t>& idx) const {
    require(!captions.empty(), "style dataset has no captions");
    const std::size_t d = captions.front().size();
    Tensor out({idx.size(), 1, d});
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(captions.at(idx[i]).ptr(), d, out.ptr() + i * d);
    return out;
}

Var denoising_loss(const Denoiser& denoiser, const NoiseSchedule& schedule, const StepBatch& batch,
                   const BandTensors& ctx) {
    Var z_t = Var::constant(add_noise(schedule, batch.images, batch.t, batch.eps));
    Var pred = denoiser(z_t, batch.t, ctx);
    return ops::mse(pred, Var::constant(batch.eps));
}

NamedParams trainable_parameters(TrainMode mode, const PromptSeed& seed, const Backbone& backbone,
                                 const ContentBranch* branch) {
    switch (mode) {
        case TrainMode::prompt_inversion: return seed.named_parameters();
        case TrainMode::full_finetune: return backbone.parameters();
        case TrainMode::content_branch:
            require(branch != nullptr, "content_branch mode needs a content branch");
            return branch->parameters();
    }
    return {};
}

void configure_trainable(TrainMode mode, PromptSeed& seed, Backbone& backbone, ContentBranch* branch) {
    seed.set_requires_grad(mode == TrainMode::prompt_inversion);
    backbone.set_requires_grad(mode == TrainMode::full_finetune);
    if (branch) branch->set_requires_grad(mode == TrainMode::content_branch);
}

namespace {

BandTensors null_context(std::size_t batch, std::size_t dim) {
    BandTensors ctx;
    for (Layer band : all_layers) ctx[band] = Var::constant(Tensor({batch, 1, dim}));
    return ctx;
}

StepResult finish_step(const Var& loss, const NamedParams& trainable, int step_index) {
    const double value = loss.value()[0];
    if (!std::isfinite(value)) fail(ErrorKind::divergence, "divergence at step " + std::to_string(step_index));
    loss.backward();
    StepResult out;
    out.loss = value;
    for (const auto& [name, v] : trainable) out.gradients.emplace_back(name, v.has_grad() ? v.grad() : Tensor(v.shape()));
    return out;
}

void check_batch(const StepBatch& batch) {
    if (batch.images.empty() || batch.images.rank() != 4 || batch.images.dim(0) == 0)
        fail(ErrorKind::invalid_argument, "training step needs a non-empty (B, C, H, W) batch");
    require(batch.t.size() == batch.images.dim(0), "training step: one timestep per element required");
    require(batch.eps.shape() == batch.images.shape(), "training step: noise shape mismatch");
}

}  // namespace

StepResult training_step(TrainMode mode, PromptSeed& seed, const PromptLayout& layout, Backbone& backbone,
                         const NoiseSchedule& schedule, const StepBatch& batch, int step_index, ContentBranch* branch) {
    check_batch(batch);
    configure_trainable(mode, seed, backbone, branch);
    const NamedParams trainable = trainable_parameters(mode, seed, backbone, branch);
    for (auto [name, v] : trainable) v.zero_grad();

    const std::size_t bsz = batch.images.dim(0);
    const auto dim = static_cast<std::size_t>(backbone.config().context_dim);
    BandTensors ctx;
    if (mode == TrainMode::prompt_inversion) {
        ctx = band_context(expand(seed, layout), batch.t);
    } else if (mode == TrainMode::full_finetune && !batch.captions.empty()) {
        require(batch.captions.shape() == Shape({bsz, 1, dim}), "captions must be (B, 1, context_dim)");
        const Var c = Var::constant(batch.captions);
        for (Layer band : all_layers) ctx[band] = c;
    } else {
        ctx = null_context(bsz, dim);
    }
    BandTensors residuals;
    const bool with_branch = mode == TrainMode::content_branch;
    if (with_branch) {
        require(batch.edges.rank() == 4 && batch.edges.dim(0) == bsz, "content_branch step needs (B, 1, H, W) edges");
        residuals = branch->encode(Var::constant(batch.edges));
    }
    Denoiser denoiser = [&](const Var& z, const std::vector<int>& t, const BandTensors& c) {
        return backbone.predict_noise(z, t, c, with_branch ? &residuals : nullptr);
    };
    return finish_step(denoising_loss(denoiser, schedule, batch, ctx), trainable, step_index);
}

StepResult training_step(const Denoiser& denoiser, PromptSeed& seed, const PromptLayout& layout,
                         const NoiseSchedule& schedule, const StepBatch& batch, int step_index) {
    check_batch(batch);
    seed.set_requires_grad(true);
    const NamedParams trainable = seed.named_parameters();
    for (auto [name, v] : trainable) v.zero_grad();
    BandTensors ctx = band_context(expand(seed, layout), batch.t);
    return finish_step(denoising_loss(denoiser, schedule, batch, ctx), trainable, step_index);
}

Optimizer::Optimizer(OptimizerKind kind, double momentum, double beta2, double eps)
    : kind_(kind), momentum_(momentum), beta2_(beta2), eps_(eps) {}

void Optimizer::step(const NamedParams& params, double lr) {
    ++steps_;
    for (const auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        const Tensor& g = p.grad();
        Var handle = p;
        Tensor& w = handle.mutable_value();
        Tensor& m = first_.try_emplace(name, g.shape()).first->second;
        if (kind_ == OptimizerKind::sgd_momentum) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = momentum_ * m[i] + g[i];
                w[i] -= lr * m[i];
            }
            continue;
        }
        Tensor& v = second_.try_emplace(name, g.shape()).first->second;
        const double c1 = 1.0 - std::pow(momentum_, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = momentum_ * m[i] + (1.0 - momentum_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

TrainResult train(const TrainConfig& config, const StyleDataset& dataset, PromptSeed& seed, const PromptLayout& layout,
                  Backbone& backbone, const NoiseSchedule& schedule, ContentBranch* branch, const LossSink& sink) {
    config.validate();
    dataset.validate();
    Engine batch_rng = make_engine(config.seed, "batch");
    Engine t_rng = make_engine(config.seed, "timestep");
    Engine noise_rng = make_engine(config.seed, "noise");
    std::uniform_int_distribution<int> pick_t(1, schedule.timesteps());

    const double offset = std::uniform_real_distribution<double>(0.0, 1.0)(t_rng);
    const double golden = 0.6180339887498949;
    std::size_t draws = 0;
    auto next_t = [&] {
        if (config.sampling == TimestepSampling::uniform) return pick_t(t_rng);
        const double u = std::fmod(offset + golden * static_cast<double>(draws++), 1.0);
        return std::min(schedule.timesteps(), 1 + static_cast<int>(u * schedule.timesteps()));
    };

    // Images are visited in epochs, reshuffled each time round.
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    auto next_image = [&] {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), batch_rng);
            cursor = 0;
        }
        return order[cursor++];
    };

    Optimizer optimizer(config.optimizer, config.momentum);
    TrainResult result;
    const Shape& shape = dataset.images.front().shape();
    for (int step = 1; step <= config.total_steps; ++step) {
        std::vector<std::size_t> idx(config.batch_size);
        for (auto& i : idx) i = next_image();
        StepBatch batch;
        batch.images = dataset.batch(idx);
        batch.t.resize(idx.size());
        for (int& t : batch.t) t = next_t();
        batch.eps = randn({idx.size(), shape[0], shape[1], shape[2]}, noise_rng);
        if (config.mode == TrainMode::content_branch) batch.edges = dataset.edge_batch(idx);
        if (config.mode == TrainMode::full_finetune && !dataset.captions.empty()) batch.captions = dataset.caption_batch(idx);

        const StepResult r = training_step(config.mode, seed, layout, backbone, schedule, batch, step, branch);
        const double lr = config.lr_at(step);
        optimizer.step(trainable_parameters(config.mode, seed, backbone, branch), lr);

        const LossRecord rec{step, r.loss, lr};
        result.losses.push_back(rec);
        if (sink) sink(rec);
        if (step % config.log_every == 0 || step == config.total_steps) {
            const std::size_t begin = result.losses.size() - std::min<std::size_t>(result.losses.size(), config.log_every);
            std::cerr << "[" << mode_name(config.mode) << "] step " << step << "/" << config.total_steps
                      << " loss " << mean_loss(result.losses, begin, result.losses.size()) << " lr " << lr << "\n";
        }
    }
    result.rng_state = {{"batch", engine_state(batch_rng)},
                        {"timestep", engine_state(t_rng)},
                        {"noise", engine_state(noise_rng)}};
    return result;
}

Tensor caption_embedding(const std::string& label, std::size_t dim, std::uint64_t seed) {
    Engine rng = make_engine(seed, "caption." + label);
    return randn({dim}, rng);
}

double mean_loss(const std::vector<LossRecord>& losses, std::size_t begin, std::size_t end) {
    require(begin < end && end <= losses.size(), "mean_loss: empty or out-of-range window");
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += losses[i].loss;
    return s / static_cast<double>(end - begin);
}

}  // namespace lsast
