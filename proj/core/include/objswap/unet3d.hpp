#pragma once

#include "objswap/nn.hpp"

#include <memory>

namespace objswap {

struct UNet3dConfig {
    int in_channels = 8;
    int out_channels = 4;
    int base_channels = 48;
    int ctx_dim = 128;
    int temb_dim = 128;
    int sin_dim = 64;
    int num_frames = 8;
    bool temporal_enabled = true;  // test switch: disabled means pure per-frame
};

// 2D UNet inflated with temporal self-attention after each spatial stage.
// Spatial blocks run per frame (frames stacked into the batch axis); temporal
// blocks mix across the frame axis only.
class UNet3d {
public:
    UNet3d(const UNet3dConfig& config, uint64_t init_seed);

    // x: [B, N, in_channels, h, w]; ctx: [B, T, ctx_dim]; t: one per sample
    Tensor forward(const Tensor& x, const Tensor& ctx, const std::vector<int>& t);
    Tensor backward(const Tensor& geps, Tensor& gctx);  // gctx: [B, T, ctx_dim]

    std::vector<nn::ParamRef> params();
    // temporal-layer parameter subset (for freeze-all-but-temporal training)
    std::vector<nn::ParamRef> temporal_params();
    const UNet3dConfig& config() const { return config_; }
    void set_temporal_enabled(bool on);

private:
    UNet3dConfig config_;
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

}  // namespace objswap
