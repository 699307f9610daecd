#include "lsast/schedule.hpp"

#include <cmath>

#include "lsast/error.hpp"

namespace lsast {

NoiseSchedule::NoiseSchedule(int timesteps, double beta_start, double beta_end, VarianceKind variance)
    : timesteps_(timesteps), variance_(variance) {
    require(timesteps >= 1, "schedule needs at least one timestep");
    require(beta_start > 0.0 && beta_end < 1.0 && beta_start < beta_end, "schedule betas must satisfy 0 < start < end < 1");
    betas_.resize(timesteps);
    alpha_bars_.resize(timesteps);
    double prod = 1.0;
    for (int i = 0; i < timesteps; ++i) {
        betas_[i] = timesteps == 1 ? beta_start
                                   : beta_start + (beta_end - beta_start) * static_cast<double>(i) / (timesteps - 1);
        prod *= 1.0 - betas_[i];
        alpha_bars_[i] = prod;
    }
}

std::size_t NoiseSchedule::index(int t) const {
    require(t >= 1 && t <= timesteps_, "timestep " + std::to_string(t) + " outside [1, " + std::to_string(timesteps_) + "]");
    return static_cast<std::size_t>(t - 1);
}

double NoiseSchedule::sigma(int t) const {
    if (variance_ == VarianceKind::beta) return std::sqrt(beta(t));
    return std::sqrt(beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)));
}

Tensor mix_noise(double alpha_bar, const Tensor& z0, const Tensor& eps) {
    require(z0.shape() == eps.shape(), "add_noise: noise shape " + shape_str(eps.shape()) + " does not match " +
                                           shape_str(z0.shape()));
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    Tensor out(z0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

Tensor add_noise(const NoiseSchedule& schedule, const Tensor& z0, int t, const Tensor& eps) {
    return mix_noise(schedule.alpha_bar(t), z0, eps);
}

Tensor add_noise(const NoiseSchedule& schedule, const Tensor& z0, const std::vector<int>& t, const Tensor& eps) {
    require(z0.shape() == eps.shape(), "add_noise: noise shape mismatch");
    require(z0.rank() >= 1 && z0.dim(0) == t.size(), "add_noise: one timestep per batch element required");
    const std::size_t per = t.empty() ? 0 : z0.size() / t.size();
    Tensor out(z0.shape());
    for (std::size_t n = 0; n < t.size(); ++n) {
        const double ab = schedule.alpha_bar(t[n]);
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) out[i] = a * z0[i] + b * eps[i];
    }
    return out;
}

Tensor denoise_mean(const NoiseSchedule& schedule, const Tensor& z_t, int t, const Tensor& eps_hat) {
    require(t >= 1, "denoise_step: t must be at least 1");
    require(z_t.shape() == eps_hat.shape(), "denoise_step: prediction shape mismatch");
    const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
    Tensor out(z_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv_sqrt_alpha * (z_t[i] - coef * eps_hat[i]);
    return out;
}

Tensor denoise_step(const NoiseSchedule& schedule, const Tensor& z_t, int t, const Tensor& eps_hat, Engine& rng) {
    Tensor out = denoise_mean(schedule, z_t, t, eps_hat);
    if (t > 1) {
        const double s = schedule.sigma(t);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (double& v : out.data()) v += s * dist(rng);
    }
    return out;
}

}  // namespace lsast
