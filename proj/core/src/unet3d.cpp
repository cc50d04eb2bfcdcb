#include "objswap/unet3d.hpp"

#include "objswap/errors.hpp"

namespace objswap {

using nn::Conv2d;
using nn::CrossAttention;
using nn::GroupNorm;
using nn::Linear;
using nn::ResBlock;
using nn::SiLU;
using nn::TemporalAttention;
using nn::Upsample2x;

struct UNet3d::Impl {
    UNet3dConfig cfg;

    Linear temb1, temb2;
    SiLU temb_act;
    Conv2d conv_in;
    ResBlock enc_res1;
    CrossAttention enc_attn1;
    TemporalAttention enc_tattn1;
    Conv2d down;
    ResBlock enc_res2;
    CrossAttention enc_attn2;
    TemporalAttention enc_tattn2;
    ResBlock mid_res1;
    CrossAttention mid_attn;
    TemporalAttention mid_tattn;
    ResBlock mid_res2;
    Upsample2x up;
    Conv2d up_conv;
    ResBlock dec_res;
    CrossAttention dec_attn;
    TemporalAttention dec_tattn;
    GroupNorm out_gn;
    SiLU out_act;
    Conv2d conv_out;

    Tensor h1_;
    Tensor temb_;
    int batch_ = 0;

    Impl(const UNet3dConfig& c, Rng& rng)
        : cfg(c),
          temb1(c.sin_dim, c.temb_dim, rng), temb2(c.temb_dim, c.temb_dim, rng),
          conv_in(c.in_channels, c.base_channels, 3, 1, 1, rng),
          enc_res1(c.base_channels, c.base_channels, c.temb_dim, rng),
          enc_attn1(c.base_channels, c.ctx_dim, rng),
          enc_tattn1(c.base_channels, c.num_frames, rng),
          down(c.base_channels, 2 * c.base_channels, 3, 2, 1, rng),
          enc_res2(2 * c.base_channels, 2 * c.base_channels, c.temb_dim, rng),
          enc_attn2(2 * c.base_channels, c.ctx_dim, rng),
          enc_tattn2(2 * c.base_channels, c.num_frames, rng),
          mid_res1(2 * c.base_channels, 2 * c.base_channels, c.temb_dim, rng),
          mid_attn(2 * c.base_channels, c.ctx_dim, rng),
          mid_tattn(2 * c.base_channels, c.num_frames, rng),
          mid_res2(2 * c.base_channels, 2 * c.base_channels, c.temb_dim, rng),
          up_conv(2 * c.base_channels, c.base_channels, 3, 1, 1, rng),
          dec_res(2 * c.base_channels, c.base_channels, c.temb_dim, rng),
          dec_attn(c.base_channels, c.ctx_dim, rng),
          dec_tattn(c.base_channels, c.num_frames, rng),
          out_gn(c.base_channels, 4),
          conv_out(c.base_channels, c.out_channels, 3, 1, 1, rng, /*zero_init=*/true) {}

    Tensor maybe_temporal(TemporalAttention& ta, const Tensor& x) {
        if (!cfg.temporal_enabled)
            return x;
        return ta.forward(x, batch_);
    }

    Tensor maybe_temporal_back(TemporalAttention& ta, const Tensor& g) {
        if (!cfg.temporal_enabled)
            return g;
        return ta.backward(g);
    }

    // replicate per-sample ctx tokens across frames: [B,T,D] -> [B*N,T,D]
    Tensor rep_ctx(const Tensor& ctx) const {
        int B = ctx.shape[0], T = ctx.shape[1], D = ctx.shape[2];
        Tensor out({B * cfg.num_frames, T, D});
        int64_t row = (int64_t)T * D;
        for (int b = 0; b < B; ++b)
            for (int n = 0; n < cfg.num_frames; ++n)
                std::copy(ctx.ptr() + b * row, ctx.ptr() + (b + 1) * row,
                          out.ptr() + ((size_t)b * cfg.num_frames + n) * row);
        return out;
    }

    void fold_ctx_grad(Tensor& gctx, const Tensor& grep) const {
        int BN = grep.shape[0], T = grep.shape[1], D = grep.shape[2];
        int B = BN / cfg.num_frames;
        if (gctx.numel() == 0)
            gctx = Tensor({B, T, D});
        int64_t row = (int64_t)T * D;
        for (int b = 0; b < B; ++b)
            for (int n = 0; n < cfg.num_frames; ++n)
                for (int64_t i = 0; i < row; ++i)
                    gctx[b * row + i] += grep[((int64_t)b * cfg.num_frames + n) * row + i];
    }

    Tensor forward(const Tensor& x5, const Tensor& ctx, const std::vector<int>& t) {
        int B = x5.shape[0], N = x5.shape[1], C = x5.shape[2], H = x5.shape[3], W = x5.shape[4];
        if (N != cfg.num_frames)
            throw ValidationError("x", "frame count mismatch with num_frames config");
        batch_ = B;
        Tensor x = x5.reshaped({B * N, C, H, W});
        Tensor ctx_rep = rep_ctx(ctx);

        Tensor sin = nn::timestep_embedding(t, cfg.sin_dim);
        temb_ = temb2.forward(temb_act.forward(temb1.forward(sin)));  // [B, temb]

        Tensor h0 = conv_in.forward(x);
        Tensor a1 = enc_attn1.forward(enc_res1.forward(h0, temb_), ctx_rep);
        h1_ = maybe_temporal(enc_tattn1, a1);
        Tensor h2 = down.forward(h1_);
        Tensor a2 = enc_attn2.forward(enc_res2.forward(h2, temb_), ctx_rep);
        Tensor h3 = maybe_temporal(enc_tattn2, a2);
        Tensor m1 = maybe_temporal(mid_tattn, mid_attn.forward(mid_res1.forward(h3, temb_), ctx_rep));
        Tensor m = mid_res2.forward(m1, temb_);
        Tensor u = up_conv.forward(up.forward(m));
        Tensor cat = UNetConcat(u, h1_);
        Tensor d = maybe_temporal(dec_tattn, dec_attn.forward(dec_res.forward(cat, temb_), ctx_rep));
        Tensor eps = conv_out.forward(out_act.forward(out_gn.forward(d)));
        return eps.reshaped({B, N, cfg.out_channels, H, W});
    }

    static Tensor UNetConcat(const Tensor& a, const Tensor& b) {
        int B = a.shape[0], Ca = a.shape[1], Cb = b.shape[1], H = a.shape[2], W = a.shape[3];
        Tensor y({B, Ca + Cb, H, W});
        int64_t hw = (int64_t)H * W;
        for (int bi = 0; bi < B; ++bi) {
            std::copy(a.ptr() + bi * Ca * hw, a.ptr() + (bi + 1) * Ca * hw,
                      y.ptr() + (size_t)bi * (Ca + Cb) * hw);
            std::copy(b.ptr() + bi * Cb * hw, b.ptr() + (bi + 1) * Cb * hw,
                      y.ptr() + (size_t)bi * (Ca + Cb) * hw + Ca * hw);
        }
        return y;
    }

    static void split_ch(const Tensor& g, int Ca, Tensor& ga, Tensor& gb) {
        int B = g.shape[0], C = g.shape[1], H = g.shape[2], W = g.shape[3];
        int Cb = C - Ca;
        ga = Tensor({B, Ca, H, W});
        gb = Tensor({B, Cb, H, W});
        int64_t hw = (int64_t)H * W;
        for (int bi = 0; bi < B; ++bi) {
            std::copy(g.ptr() + (size_t)bi * C * hw, g.ptr() + (size_t)bi * C * hw + Ca * hw,
                      ga.ptr() + (size_t)bi * Ca * hw);
            std::copy(g.ptr() + (size_t)bi * C * hw + Ca * hw, g.ptr() + (size_t)(bi + 1) * C * hw,
                      gb.ptr() + (size_t)bi * Cb * hw);
        }
    }

    Tensor backward(const Tensor& geps5, Tensor& gctx) {
        int B = geps5.shape[0], N = geps5.shape[1], H = geps5.shape[3], W = geps5.shape[4];
        Tensor geps = geps5.reshaped({B * N, cfg.out_channels, H, W});
        Tensor gtemb_total({temb_.shape[0], temb_.shape[1]});
        Tensor gt;
        gctx = Tensor();
        Tensor gctx_rep;

        Tensor gd = out_gn.backward(out_act.backward(conv_out.backward(geps)));
        gd = maybe_temporal_back(dec_tattn, gd);
        Tensor gcat_pre = dec_attn.backward(gd, gctx_rep);
        fold_ctx_grad(gctx, gctx_rep);
        Tensor gcat = dec_res.backward(gcat_pre, gt);
        axpy(gtemb_total, 1.0, gt);

        Tensor gu, gh1_cat;
        split_ch(gcat, cfg.base_channels, gu, gh1_cat);
        Tensor gm = up.backward(up_conv.backward(gu));

        Tensor gm1 = mid_res2.backward(gm, gt);
        axpy(gtemb_total, 1.0, gt);
        gm1 = maybe_temporal_back(mid_tattn, gm1);
        Tensor gmid = mid_attn.backward(gm1, gctx_rep);
        fold_ctx_grad(gctx, gctx_rep);
        Tensor gh3 = mid_res1.backward(gmid, gt);
        axpy(gtemb_total, 1.0, gt);

        gh3 = maybe_temporal_back(enc_tattn2, gh3);
        Tensor gh2_pre = enc_attn2.backward(gh3, gctx_rep);
        fold_ctx_grad(gctx, gctx_rep);
        Tensor gh2 = enc_res2.backward(gh2_pre, gt);
        axpy(gtemb_total, 1.0, gt);

        Tensor gh1 = down.backward(gh2);
        axpy(gh1, 1.0, gh1_cat);
        gh1 = maybe_temporal_back(enc_tattn1, gh1);

        Tensor gh0_pre = enc_attn1.backward(gh1, gctx_rep);
        fold_ctx_grad(gctx, gctx_rep);
        Tensor gh0 = enc_res1.backward(gh0_pre, gt);
        axpy(gtemb_total, 1.0, gt);

        Tensor gx = conv_in.backward(gh0);
        (void)temb1.backward(temb_act.backward(temb2.backward(gtemb_total)));
        return gx.reshaped({B, N, cfg.in_channels, H, W});
    }

    void collect(std::vector<nn::ParamRef>& out) {
        temb1.collect_params(out, "unet3d.temb1");
        temb2.collect_params(out, "unet3d.temb2");
        conv_in.collect_params(out, "unet3d.in");
        enc_res1.collect_params(out, "unet3d.enc_res1");
        enc_attn1.collect_params(out, "unet3d.enc_attn1");
        enc_tattn1.collect_params(out, "unet3d.enc_tattn1");
        down.collect_params(out, "unet3d.down");
        enc_res2.collect_params(out, "unet3d.enc_res2");
        enc_attn2.collect_params(out, "unet3d.enc_attn2");
        enc_tattn2.collect_params(out, "unet3d.enc_tattn2");
        mid_res1.collect_params(out, "unet3d.mid_res1");
        mid_attn.collect_params(out, "unet3d.mid_attn");
        mid_tattn.collect_params(out, "unet3d.mid_tattn");
        mid_res2.collect_params(out, "unet3d.mid_res2");
        up_conv.collect_params(out, "unet3d.up_conv");
        dec_res.collect_params(out, "unet3d.dec_res");
        dec_attn.collect_params(out, "unet3d.dec_attn");
        dec_tattn.collect_params(out, "unet3d.dec_tattn");
        out_gn.collect_params(out, "unet3d.out_gn");
        conv_out.collect_params(out, "unet3d.out");
    }

    void collect_temporal(std::vector<nn::ParamRef>& out) {
        enc_tattn1.collect_params(out, "unet3d.enc_tattn1");
        enc_tattn2.collect_params(out, "unet3d.enc_tattn2");
        mid_tattn.collect_params(out, "unet3d.mid_tattn");
        dec_tattn.collect_params(out, "unet3d.dec_tattn");
    }
};

UNet3d::UNet3d(const UNet3dConfig& config, uint64_t init_seed) : config_(config) {
    Rng rng(init_seed, "unet3d_init");
    impl_ = std::make_shared<Impl>(config, rng);
}

Tensor UNet3d::forward(const Tensor& x, const Tensor& ctx, const std::vector<int>& t) {
    if (x.ndim() != 5 || x.shape[2] != config_.in_channels)
        throw ValidationError("x", "expected [B,N," + std::to_string(config_.in_channels) +
                                       ",h,w], got " + x.shape_str());
    return impl_->forward(x, ctx, t);
}

Tensor UNet3d::backward(const Tensor& geps, Tensor& gctx) {
    return impl_->backward(geps, gctx);
}

std::vector<nn::ParamRef> UNet3d::params() {
    std::vector<nn::ParamRef> out;
    impl_->collect(out);
    return out;
}

std::vector<nn::ParamRef> UNet3d::temporal_params() {
    std::vector<nn::ParamRef> out;
    impl_->collect_temporal(out);
    return out;
}

void UNet3d::set_temporal_enabled(bool on) {
    config_.temporal_enabled = on;
    impl_->cfg.temporal_enabled = on;
}

}  // namespace objswap
