#pragma once

#include "objswap/rng.hpp"
#include "objswap/tensor.hpp"

#include <string>
#include <vector>

namespace objswap {

struct NoiseSchedule {
    enum class Kind { linear, cosine };
    Kind kind = Kind::linear;
    int T = 256;
    // index t in [1,T]; alpha_bars[0] == 1 by convention
    std::vector<double> betas, alphas, alpha_bars;

    // beta_end < 0 picks a value that lands alpha_bar_T near 0.01 for the
    // given step count.
    static NoiseSchedule linear(int T, double beta_start = 1e-4, double beta_end = -1.0);
    static NoiseSchedule cosine(int T);
    void validate() const;  // strict monotonicity and endpoint checks
};

struct CfgConfig {
    double dropout_prob = 0.2;   // training-time conditioning dropout
    double guidance_scale = 3.0; // inference extrapolation factor
    bool joint_dropout = false;  // one coin for all channels vs independent
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, t in [1,T]
Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// Denoiser interface shared by both stages. Conditioning channels arrive
// batch-major, channel 0 is the channel-concat latent, channel 1 the
// cross-attention embedding; either may be replaced by its null value.
struct EpsModel {
    virtual ~EpsModel() = default;
    virtual Tensor forward(const Tensor& z_t, const std::vector<Tensor>& conds,
                           const std::vector<int>& t) = 0;
    virtual void backward(const Tensor& grad_eps_hat) {}
};

struct DiffusionBatch {
    Tensor z0;                  // [B, ...]
    std::vector<Tensor> conds;  // each [B, ...]
};

struct LossInfo {
    double loss = 0.0;
    std::vector<int> timesteps;                 // per sample
    std::vector<std::vector<bool>> dropped;     // [channel][sample]
};

// Draws t ~ U[1,T] and eps ~ N(0,1) per sample, applies conditioning dropout
// (independent per channel unless joint), runs the model and returns the
// mean squared eps-prediction error. With do_backward the model receives
// d(loss)/d(eps_hat).
LossInfo loss_eps(EpsModel& model, const DiffusionBatch& batch, const NoiseSchedule& sched,
                  const CfgConfig& cfg, Rng& rng, bool do_backward);

// Ancestral DDPM sampling, batch size 1. guidance_scale == 1 runs the
// conditional branch only, so its trajectory is bitwise that of
// conditional-only sampling.
Tensor ddpm_sample(EpsModel& model, const std::vector<int>& sample_shape,
                   const std::vector<Tensor>& conds, const std::vector<Tensor>& null_conds,
                   const NoiseSchedule& sched, double guidance_scale, Rng& rng);

}  // namespace objswap
