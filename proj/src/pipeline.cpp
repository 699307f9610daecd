#include "lsast/pipeline.hpp"

#include <cmath>

#include "lsast/error.hpp"
#include "lsast/image_io.hpp"
#include "lsast/sampler.hpp"

namespace lsast {

void StylizeRequest::validate() const {
    if (!(strength >= 0.0 && strength <= 1.0))
        fail(ErrorKind::config, "strength must be in [0, 1], got " + std::to_string(strength));
    if (!(content_strength >= 0.0 && std::isfinite(content_strength)))
        fail(ErrorKind::config, "content_strength must be non-negative, got " + std::to_string(content_strength));
    if (resolution < 0) fail(ErrorKind::config, "resolution must be non-negative");
    if (!(canny.low >= 0.0 && canny.low < canny.high)) fail(ErrorKind::config, "canny thresholds: invalid thresholds");
}

int start_timestep(double tau, int timesteps) {
    require(tau >= 0.0 && tau <= 1.0, "strength must be in [0, 1]");
    return static_cast<int>(std::lround(tau * timesteps));
}

Tensor stylize_batch(const Model& model, const std::vector<Tensor>& contents, double tau, double content_strength,
                     const CannyOptions& canny_options, std::uint64_t seed) {
    require(!contents.empty(), "stylize: no content images");
    const auto res = static_cast<std::size_t>(model.backbone_config.resolution);
    const std::size_t b = contents.size(), per = 3 * res * res;
    Tensor x0({b, 3, res, res});
    Tensor edges({b, 1, res, res});
    for (std::size_t i = 0; i < b; ++i) {
        require(contents[i].shape() == Shape({3, res, res}), "stylize: content image " + std::to_string(i) + " has shape " +
                                                                 shape_str(contents[i].shape()) + ", expected " +
                                                                 shape_str({3, res, res}));
        const Tensor s = to_signed(contents[i]);
        std::copy_n(s.ptr(), per, x0.ptr() + i * per);
        const EdgeMap e = canny(to_grayscale(contents[i]), canny_options);
        std::copy_n(e.edges.ptr(), res * res, edges.ptr() + i * res * res);
    }

    const NoiseSchedule schedule = model.schedule();
    const int t0 = start_timestep(tau, schedule.timesteps());
    if (t0 == 0) return x0;

    // Per-image streams keep every output independent of batch composition.
    Tensor eps(x0.shape());
    for (std::size_t i = 0; i < b; ++i) {
        Engine rng = make_engine(seed, "stylize.noise." + std::to_string(i));
        const Tensor e = randn({3, res, res}, rng);
        std::copy_n(e.ptr(), per, eps.ptr() + i * per);
    }
    const Tensor z = add_noise(schedule, x0, t0, eps);

    BandTensors residuals;
    ResidualFn residual_fn;
    if (content_strength != 0.0) {
        NoGradGuard no_grad;
        residuals = model.branch.encode(Var::constant(edges), content_strength);
        residual_fn = [&residuals](int) { return residuals; };
    }
    std::vector<Engine> rngs;
    for (std::size_t i = 0; i < b; ++i) rngs.push_back(make_engine(seed, "stylize.sampler." + std::to_string(i)));
    return sample(model.backbone, schedule, model.prompts(), z, t0, residual_fn, rngs);
}

Tensor stylize(const StylizeRequest& req) {
    req.validate();
    Model model = load_model(req.checkpoint);
    const auto model_res = static_cast<std::size_t>(model.backbone_config.resolution);
    const auto out_res = req.resolution > 0 ? static_cast<std::size_t>(req.resolution) : model_res;

    const Tensor original = read_image(req.content);
    if (start_timestep(req.strength, model.layout.timesteps) == 0) {
        const Tensor img = resize_bilinear(original, out_res, out_res);
        write_png(req.output, img);
        return img;
    }
    const Tensor content = resize_bilinear(original, model_res, model_res);
    const Tensor out = stylize_batch(model, {content}, req.strength, req.content_strength, req.canny, req.seed);
    Tensor img = to_unit(out.reshaped({3, model_res, model_res}));
    img = resize_bilinear(img, out_res, out_res);
    write_png(req.output, img);
    return img;
}

}  // namespace lsast
