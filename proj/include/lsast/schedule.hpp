#pragma once

#include <vector>

#include "lsast/rng.hpp"
#include "lsast/tensor.hpp"

namespace lsast {

// posterior: sigma_t^2 = beta_t (1 - abar_{t-1}) / (1 - abar_t); beta: sigma_t^2 = beta_t.
enum class VarianceKind { posterior, beta };

// Linear-beta DDPM schedule. Timesteps are 1-based; alpha_bar(0) = 1.
class NoiseSchedule {
public:
    explicit NoiseSchedule(int timesteps = 1000, double beta_start = 1e-4, double beta_end = 0.02,
                           VarianceKind variance = VarianceKind::posterior);

    int timesteps() const { return timesteps_; }
    double beta(int t) const { return betas_.at(index(t)); }
    double alpha(int t) const { return 1.0 - beta(t); }
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_.at(index(t)); }
    double sigma(int t) const;
    VarianceKind variance() const { return variance_; }

private:
    std::size_t index(int t) const;

    int timesteps_;
    VarianceKind variance_;
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

// sqrt(abar) z0 + sqrt(1 - abar) eps.
Tensor mix_noise(double alpha_bar, const Tensor& z0, const Tensor& eps);
Tensor add_noise(const NoiseSchedule& schedule, const Tensor& z0, int t, const Tensor& eps);
// Per-element timesteps over the leading batch axis.
Tensor add_noise(const NoiseSchedule& schedule, const Tensor& z0, const std::vector<int>& t, const Tensor& eps);

// Deterministic part of the ancestral step: (z_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t).
Tensor denoise_mean(const NoiseSchedule& schedule, const Tensor& z_t, int t, const Tensor& eps_hat);
// z_{t-1}; draws fresh noise for t > 1 only.
Tensor denoise_step(const NoiseSchedule& schedule, const Tensor& z_t, int t, const Tensor& eps_hat, Engine& rng);

}  // namespace lsast
