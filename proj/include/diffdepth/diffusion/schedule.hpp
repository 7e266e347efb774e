#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "diffdepth/core/tensor.hpp"

namespace diffdepth {

enum class ScheduleKind { linear };

// Per-timestep noising coefficients. alphas[t] is the per-step signal
// retention, alpha_bars[t] the cumulative product over steps 0..t.
struct NoiseSchedule {
    std::size_t num_steps = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    double alpha(std::size_t t) const { return alphas.at(t); }
    double alpha_bar(std::size_t t) const { return alpha_bars.at(t); }
};

inline NoiseSchedule make_noise_schedule(std::size_t num_steps, ScheduleKind kind,
                                         double beta_start, double beta_end) {
    if (num_steps < 1) throw std::invalid_argument("make_noise_schedule: num_steps must be >= 1");
    if (kind != ScheduleKind::linear) throw std::invalid_argument("make_noise_schedule: unknown kind");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("make_noise_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.num_steps = num_steps;
    s.betas.resize(num_steps);
    s.alphas.resize(num_steps);
    s.alpha_bars.resize(num_steps);
    double bar = 1.0;
    for (std::size_t t = 0; t < num_steps; ++t) {
        // endpoints inclusive; degenerate to beta_start when num_steps == 1
        const double frac = num_steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(num_steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("make_noise_schedule: beta outside (0,1)");
        s.betas[t] = beta;
        s.alphas[t] = 1.0 - beta;
        bar *= s.alphas[t];
        s.alpha_bars[t] = bar;
    }
    return s;
}

// Latent sample with its diffusion clock; timestep 0 is the clean latent z0.
template <typename T>
struct LatentState {
    Tensor<T> values;  // channels x height x width
    int timestep = 0;
};

// One Markov noising step: sqrt(alpha_t) * z_prev + sqrt(1 - alpha_t) * noise.
// The caller supplies the standard-normal draw; nothing is sampled here.
template <typename T>
LatentState<T> forward_noise_step(const LatentState<T>& z_prev, double alpha_t, const Tensor<T>& noise) {
    if (!(alpha_t > 0.0 && alpha_t <= 1.0))
        throw std::invalid_argument("forward_noise_step: alpha_t must be in (0,1]");
    require_same_shape(z_prev.values, noise, "forward_noise_step");
    const T a = static_cast<T>(std::sqrt(alpha_t));
    const T b = static_cast<T>(std::sqrt(1.0 - alpha_t));
    LatentState<T> out;
    out.values = Tensor<T>(z_prev.values.shape);
    for (std::size_t i = 0; i < noise.size(); ++i)
        out.values[i] = a * z_prev.values[i] + b * noise[i];
    out.timestep = z_prev.timestep + 1;
    return out;
}

// Closed-form composition of t steps: sqrt(abar_t) * z0 + sqrt(1 - abar_t) * noise.
template <typename T>
LatentState<T> forward_noise_to(const LatentState<T>& z0, int t, const NoiseSchedule& schedule,
                                const Tensor<T>& noise) {
    if (z0.timestep != 0) throw std::invalid_argument("forward_noise_to: input must be a clean latent (timestep 0)");
    if (t < 1 || static_cast<std::size_t>(t) > schedule.num_steps)
        throw std::out_of_range("forward_noise_to: t out of range");
    require_same_shape(z0.values, noise, "forward_noise_to");
    const double abar = schedule.alpha_bar(static_cast<std::size_t>(t - 1));
    const T a = static_cast<T>(std::sqrt(abar));
    const T b = static_cast<T>(std::sqrt(1.0 - abar));
    LatentState<T> out;
    out.values = Tensor<T>(z0.values.shape);
    for (std::size_t i = 0; i < noise.size(); ++i)
        out.values[i] = a * z0.values[i] + b * noise[i];
    out.timestep = t;
    return out;
}

// Noise-prediction objective: mean over elements of squared differences.
// The mean (rather than sum) keeps values comparable across latent sizes.
template <typename T>
double ldm_loss(const Tensor<T>& eps_pred, const Tensor<T>& eps_true) {
    require_same_shape(eps_pred, eps_true, "ldm_loss");
    if (eps_pred.size() == 0) throw std::invalid_argument("ldm_loss: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps_pred.size(); ++i) {
        const double d = static_cast<double>(eps_pred[i]) - static_cast<double>(eps_true[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(eps_pred.size());
}

// d ldm_loss / d eps_pred, for training.
template <typename T>
Tensor<T> ldm_loss_grad(const Tensor<T>& eps_pred, const Tensor<T>& eps_true) {
    require_same_shape(eps_pred, eps_true, "ldm_loss_grad");
    Tensor<T> g(eps_pred.shape);
    const T scale = static_cast<T>(2.0 / static_cast<double>(eps_pred.size()));
    for (std::size_t i = 0; i < eps_pred.size(); ++i)
        g[i] = scale * (eps_pred[i] - eps_true[i]);
    return g;
}

}  // namespace diffdepth
