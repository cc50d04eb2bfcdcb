#include "objswap/diffusion.hpp"

#include "objswap/errors.hpp"

#include <cmath>

namespace objswap {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 2)
        throw ValidationError("T", "schedule needs at least 2 steps");
    if (beta_end < 0) {
        // sum of betas ~ -ln(target abar_T) with target 0.01
        beta_end = std::min(0.35, 2.0 * 4.60517 / T - beta_start);
    }
    if (!(beta_start > 0 && beta_end > beta_start && beta_end < 1))
        throw ValidationError("beta", "need 0 < beta_start < beta_end < 1");
    NoiseSchedule s;
    s.kind = Kind::linear;
    s.T = T;
    s.betas.assign((size_t)T + 1, 0.0);
    s.alphas.assign((size_t)T + 1, 1.0);
    s.alpha_bars.assign((size_t)T + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        s.betas[(size_t)t] = beta_start + (beta_end - beta_start) * (t - 1) / (double)(T - 1);
        s.alphas[(size_t)t] = 1.0 - s.betas[(size_t)t];
        s.alpha_bars[(size_t)t] = s.alpha_bars[(size_t)t - 1] * s.alphas[(size_t)t];
    }
    return s;
}

NoiseSchedule NoiseSchedule::cosine(int T) {
    if (T < 2)
        throw ValidationError("T", "schedule needs at least 2 steps");
    NoiseSchedule s;
    s.kind = Kind::cosine;
    s.T = T;
    s.betas.assign((size_t)T + 1, 0.0);
    s.alphas.assign((size_t)T + 1, 1.0);
    s.alpha_bars.assign((size_t)T + 1, 1.0);
    const double off = 0.008;
    auto f = [&](double t) {
        double v = std::cos((t / T + off) / (1.0 + off) * 1.5707963267948966);
        return v * v;
    };
    double f0 = f(0.0);
    for (int t = 1; t <= T; ++t) {
        double ab = f((double)t) / f0;
        double beta = 1.0 - ab / s.alpha_bars[(size_t)t - 1];
        beta = std::min(beta, 0.999);
        s.betas[(size_t)t] = beta;
        s.alphas[(size_t)t] = 1.0 - beta;
        s.alpha_bars[(size_t)t] = s.alpha_bars[(size_t)t - 1] * s.alphas[(size_t)t];
    }
    return s;
}

void NoiseSchedule::validate() const {
    if ((int)alpha_bars.size() != T + 1)
        throw ValidationError("schedule", "array length mismatch");
    for (int t = 1; t <= T; ++t) {
        double b = betas[(size_t)t], ab = alpha_bars[(size_t)t];
        if (!(b > 0 && b < 1))
            throw ValidationError("schedule", "beta out of (0,1) at t=" + std::to_string(t));
        if (!(ab > 0 && ab < 1))
            throw ValidationError("schedule", "alpha_bar out of (0,1) at t=" + std::to_string(t));
        if (!(ab < alpha_bars[(size_t)t - 1]))
            throw ValidationError("schedule", "alpha_bar not strictly decreasing at t=" + std::to_string(t));
    }
    if (!(alpha_bars[1] > 0.9))
        throw ValidationError("schedule", "alpha_bar_1 not close to 1");
    if (!(alpha_bars[(size_t)T] < 0.05))
        throw ValidationError("schedule", "alpha_bar_T not close to 0");
}

Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T)
        throw ValidationError("t", "timestep outside [1,T]");
    if (!z0.same_shape(eps))
        throw ValidationError("eps", "shape mismatch with z0");
    double a = std::sqrt(sched.alpha_bars[(size_t)t]);
    double b = std::sqrt(1.0 - sched.alpha_bars[(size_t)t]);
    Tensor zt = Tensor::zeros_like(z0);
    for (int64_t i = 0; i < z0.numel(); ++i)
        zt[i] = a * z0[i] + b * eps[i];
    return zt;
}

LossInfo loss_eps(EpsModel& model, const DiffusionBatch& batch, const NoiseSchedule& sched,
                  const CfgConfig& cfg, Rng& rng, bool do_backward) {
    int B = batch.z0.shape[0];
    int64_t row = batch.z0.numel() / B;

    LossInfo info;
    info.timesteps.resize((size_t)B);
    info.dropped.assign(batch.conds.size(), std::vector<bool>((size_t)B, false));

    // per-sample timestep and noise
    Tensor eps = Tensor::zeros_like(batch.z0);
    rng.fill_normal(eps.data);
    Tensor zt = Tensor::zeros_like(batch.z0);
    for (int b = 0; b < B; ++b) {
        int t = 1 + (int)rng.uniform_index((uint64_t)sched.T);
        info.timesteps[(size_t)b] = t;
        double sa = std::sqrt(sched.alpha_bars[(size_t)t]);
        double sb = std::sqrt(1.0 - sched.alpha_bars[(size_t)t]);
        for (int64_t i = b * row; i < (b + 1) * row; ++i)
            zt[i] = sa * batch.z0[i] + sb * eps[i];
    }

    // conditioning dropout (null token = zeros), per sample
    std::vector<Tensor> conds = batch.conds;
    for (int b = 0; b < B; ++b) {
        bool joint_drop = cfg.joint_dropout && rng.bernoulli(cfg.dropout_prob);
        for (size_t ch = 0; ch < conds.size(); ++ch) {
            bool drop = cfg.joint_dropout ? joint_drop : rng.bernoulli(cfg.dropout_prob);
            if (drop) {
                int64_t crow = conds[ch].numel() / B;
                for (int64_t i = b * crow; i < (b + 1) * crow; ++i)
                    conds[ch][i] = 0.0;
                info.dropped[ch][(size_t)b] = true;
            }
        }
    }

    Tensor eps_hat = model.forward(zt, conds, info.timesteps);
    if (!all_finite(eps_hat))
        throw TrainingError("denoiser produced non-finite output");
    info.loss = mse(eps_hat, eps);
    if (do_backward) {
        Tensor g = Tensor::zeros_like(eps_hat);
        double scale = 2.0 / (double)eps_hat.numel();
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] = scale * (eps_hat[i] - eps[i]);
        model.backward(g);
    }
    return info;
}

Tensor ddpm_sample(EpsModel& model, const std::vector<int>& sample_shape,
                   const std::vector<Tensor>& conds, const std::vector<Tensor>& null_conds,
                   const NoiseSchedule& sched, double guidance_scale, Rng& rng) {
    Tensor z(sample_shape);
    rng.fill_normal(z.data);
    for (int t = sched.T; t >= 1; --t) {
        std::vector<int> ts(1, t);
        Tensor eps_hat;
        if (guidance_scale == 1.0) {
            eps_hat = model.forward(z, conds, ts);
        } else {
            Tensor eps_c = model.forward(z, conds, ts);
            Tensor eps_u = model.forward(z, null_conds, ts);
            eps_hat = eps_u;
            for (int64_t i = 0; i < eps_hat.numel(); ++i)
                eps_hat[i] = eps_u[i] + guidance_scale * (eps_c[i] - eps_u[i]);
        }
        double at = sched.alphas[(size_t)t];
        double abt = sched.alpha_bars[(size_t)t];
        double abt_prev = sched.alpha_bars[(size_t)t - 1];
        double coef = sched.betas[(size_t)t] / std::sqrt(1.0 - abt);
        double inv_sqrt_a = 1.0 / std::sqrt(at);
        double sigma = t > 1 ? std::sqrt(sched.betas[(size_t)t] * (1.0 - abt_prev) / (1.0 - abt)) : 0.0;
        for (int64_t i = 0; i < z.numel(); ++i) {
            double mean = inv_sqrt_a * (z[i] - coef * eps_hat[i]);
            z[i] = mean + (sigma > 0 ? sigma * rng.normal() : 0.0);
        }
    }
    return z;
}

}  // namespace objswap
