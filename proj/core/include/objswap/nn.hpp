#pragma once

#include "objswap/rng.hpp"
#include "objswap/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace objswap::nn {

using objswap::Rng;
using objswap::Tensor;

struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

struct Module {
    virtual ~Module() = default;
    virtual void collect_params(std::vector<ParamRef>& out, const std::string& prefix) = 0;
};

void zero_grads(const std::vector<ParamRef>& params);
int64_t param_count(const std::vector<ParamRef>& params);

// ---- layers -----------------------------------------------------------------
// Each layer keeps the activations it needs; backward() accumulates parameter
// gradients (+=) and returns the input gradient.

struct Linear : Module {
    int in_dim, out_dim;
    Tensor W, b, dW, db;
    Tensor x_;

    Linear(int in, int out, Rng& rng, double scale = -1.0);
    Tensor forward(const Tensor& x);  // [B,in] -> [B,out]
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
};

struct Conv2d : Module {
    int in_ch, out_ch, ksize, stride, pad;
    Tensor W, b, dW, db;  // W: [out_ch, in_ch*k*k]
    Tensor x_;
    int out_h_ = 0, out_w_ = 0;

    Conv2d(int in_c, int out_c, int k, int stride, int pad, Rng& rng, bool zero_init = false);
    Tensor forward(const Tensor& x);  // [B,C,H,W] -> [B,O,H',W']
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
};

struct GroupNorm : Module {
    int channels, groups;
    double eps = 1e-5;
    Tensor gamma, beta, dgamma, dbeta;
    Tensor x_, xhat_;
    std::vector<double> mean_, inv_std_;

    GroupNorm(int channels, int groups);
    Tensor forward(const Tensor& x);  // [B,C,H,W]
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
};

struct SiLU : Module {
    Tensor x_;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<ParamRef>&, const std::string&) override {}
};

struct Upsample2x : Module {
    int in_h_ = 0, in_w_ = 0;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<ParamRef>&, const std::string&) override {}
};

struct GlobalAvgPool : Module {
    int h_ = 0, w_ = 0;
    Tensor forward(const Tensor& x);   // [B,C,H,W] -> [B,C]
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<ParamRef>&, const std::string&) override {}
};

// Single-head cross-attention from spatial positions onto a small token set,
// with residual output. The output projection starts at zero so a fresh
// network ignores the context until trained.
struct CrossAttention : Module {
    int channels, ctx_dim;
    Tensor Wq, Wk, Wv, Wo, dWq, dWk, dWv, dWo;
    // per-sample activations
    std::vector<Tensor> q_, K_, V_, A_, O_;
    Tensor x_, ctx_;

    CrossAttention(int channels, int ctx_dim, Rng& rng);
    // x: [B,C,H,W], ctx: [B,T,ctx_dim]
    Tensor forward(const Tensor& x, const Tensor& ctx);
    Tensor backward(const Tensor& gy, Tensor& gctx_out);
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
};

// Single-head self-attention across the frame axis at each spatial location,
// with a learned positional embedding and residual output (zero-init Wo, so
// an untrained network is frame-permutation equivariant).
struct TemporalAttention : Module {
    int channels, num_frames;
    Tensor Wq, Wk, Wv, Wo, pos, dWq, dWk, dWv, dWo, dpos;
    Tensor x_;
    std::vector<Tensor> U_, q_, K_, V_, A_, O_;
    int b_ = 0, p_ = 0;

    TemporalAttention(int channels, int num_frames, Rng& rng);
    // x: [B*N, C, H, W] with known batch size B
    Tensor forward(const Tensor& x, int batch);
    Tensor backward(const Tensor& gy);
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
};

struct ResBlock : Module {
    int in_ch, out_ch;
    GroupNorm gn1, gn2;
    SiLU act1, act2, act_emb;
    Conv2d conv1, conv2;
    Linear emb_proj;
    std::unique_ptr<Conv2d> skip;  // 1x1 when in_ch != out_ch
    Tensor x_;
    int emb_b_ = 0;

    ResBlock(int in_c, int out_c, int emb_dim, Rng& rng);
    // temb: [B, emb_dim]; with x [B*N,...] frames per sample repeat temb rows
    Tensor forward(const Tensor& x, const Tensor& temb);
    Tensor backward(const Tensor& gy, Tensor& gtemb_out);
    void collect_params(std::vector<ParamRef>& out, const std::string& prefix) override;
};

// Sinusoidal embedding of integer timesteps, dim must be even. No params.
Tensor timestep_embedding(const std::vector<int>& t, int dim);

struct Adam {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step_count = 0;
    std::vector<Tensor> m_, v_;

    void step(const std::vector<ParamRef>& params);
    void reset();
};

// Fills with N(0, scale); default scale = sqrt(2/fan_in) chosen by layers.
void init_normal(Tensor& t, Rng& rng, double scale);

}  // namespace objswap::nn
