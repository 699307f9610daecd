#include "lsast/sampler.hpp"

#include <algorithm>

#include "lsast/error.hpp"

namespace lsast {

BandTensors band_context(const PromptSpace& space, const std::vector<int>& timesteps) {
    BandTensors ctx;
    for (Layer band : all_layers) ctx[band] = space.route_batch(timesteps, band);
    return ctx;
}

Tensor sample(const Backbone& backbone, const NoiseSchedule& schedule, const PromptSpace& space, const Tensor& init,
              int t0, const ResidualFn& residuals, std::vector<Engine>& rngs) {
    require(t0 >= 1 && t0 <= schedule.timesteps(),
            "sample: start timestep " + std::to_string(t0) + " outside [1, " + std::to_string(schedule.timesteps()) + "]");
    require(init.rank() == 4, "sample: init must be (B, C, H, W)");
    require(rngs.size() == init.dim(0), "sample: one random stream per batch element required");
    const std::size_t per = init.size() / init.dim(0);
    const Shape one{1, init.dim(1), init.dim(2), init.dim(3)};
    NoGradGuard no_grad;
    Tensor z = init;
    for (int t = t0; t >= 1; --t) {
        const std::vector<int> ts(z.dim(0), t);
        const BandTensors ctx = band_context(space, ts);
        BandTensors res;
        if (residuals) res = residuals(t);
        const Var eps_hat = backbone.predict_noise(Var::constant(z), ts, ctx, residuals ? &res : nullptr);
        for (std::size_t b = 0; b < rngs.size(); ++b) {
            Tensor zb(one, std::vector<double>(z.ptr() + b * per, z.ptr() + (b + 1) * per));
            Tensor eb(one, std::vector<double>(eps_hat.value().ptr() + b * per, eps_hat.value().ptr() + (b + 1) * per));
            const Tensor next = denoise_step(schedule, zb, t, eb, rngs[b]);
            std::copy_n(next.ptr(), per, z.ptr() + b * per);
        }
        if (!z.all_finite()) fail(ErrorKind::divergence, "sampling produced non-finite values at t=" + std::to_string(t));
    }
    for (double& v : z.data()) v = std::clamp(v, -1.0, 1.0);
    return z;
}

}  // namespace lsast
