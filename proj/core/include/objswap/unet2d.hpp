#pragma once

#include "objswap/nn.hpp"

#include <memory>

namespace objswap {

struct UNet2dConfig {
    int in_channels = 8;  // noisy latent (4) + channel-concat conditioning (4)
    int out_channels = 4;
    int base_channels = 48;
    int ctx_dim = 128;
    int temb_dim = 128;
    int sin_dim = 64;
};

// Two-scale UNet over latents with timestep embedding and one cross-attention
// block per stage. Spatial layers only; samples in a batch never mix.
class UNet2d {
public:
    UNet2d(const UNet2dConfig& config, uint64_t init_seed);

    // x: [B, in_channels, h, w], ctx: [B, T, ctx_dim], t: one timestep per sample
    Tensor forward(const Tensor& x, const Tensor& ctx, const std::vector<int>& t);
    // returns grad wrt x; gctx receives grad wrt ctx
    Tensor backward(const Tensor& geps, Tensor& gctx);

    std::vector<nn::ParamRef> params();
    const UNet2dConfig& config() const { return config_; }

private:
    UNet2dConfig config_;
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

}  // namespace objswap
