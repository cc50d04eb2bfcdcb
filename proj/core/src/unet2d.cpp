#include "objswap/unet2d.hpp"

#include "objswap/errors.hpp"

namespace objswap {

using nn::Conv2d;
using nn::CrossAttention;
using nn::GroupNorm;
using nn::Linear;
using nn::ResBlock;
using nn::SiLU;
using nn::Upsample2x;

struct UNet2d::Impl {
    UNet2dConfig cfg;

    Linear temb1, temb2;
    SiLU temb_act;
    Conv2d conv_in;
    ResBlock enc_res1;
    CrossAttention enc_attn1;
    Conv2d down;
    ResBlock enc_res2;
    CrossAttention enc_attn2;
    ResBlock mid_res1;
    CrossAttention mid_attn;
    ResBlock mid_res2;
    Upsample2x up;
    Conv2d up_conv;
    ResBlock dec_res;
    CrossAttention dec_attn;
    GroupNorm out_gn;
    SiLU out_act;
    Conv2d conv_out;

    Tensor h1_;  // skip activation
    Tensor temb_;

    Impl(const UNet2dConfig& c, Rng& rng)
        : cfg(c),
          temb1(c.sin_dim, c.temb_dim, rng), temb2(c.temb_dim, c.temb_dim, rng),
          conv_in(c.in_channels, c.base_channels, 3, 1, 1, rng),
          enc_res1(c.base_channels, c.base_channels, c.temb_dim, rng),
          enc_attn1(c.base_channels, c.ctx_dim, rng),
          down(c.base_channels, 2 * c.base_channels, 3, 2, 1, rng),
          enc_res2(2 * c.base_channels, 2 * c.base_channels, c.temb_dim, rng),
          enc_attn2(2 * c.base_channels, c.ctx_dim, rng),
          mid_res1(2 * c.base_channels, 2 * c.base_channels, c.temb_dim, rng),
          mid_attn(2 * c.base_channels, c.ctx_dim, rng),
          mid_res2(2 * c.base_channels, 2 * c.base_channels, c.temb_dim, rng),
          up_conv(2 * c.base_channels, c.base_channels, 3, 1, 1, rng),
          dec_res(2 * c.base_channels, c.base_channels, c.temb_dim, rng),
          dec_attn(c.base_channels, c.ctx_dim, rng),
          out_gn(c.base_channels, 4),
          conv_out(c.base_channels, c.out_channels, 3, 1, 1, rng, /*zero_init=*/true) {}

    Tensor temb_forward(const std::vector<int>& t) {
        Tensor sin = nn::timestep_embedding(t, cfg.sin_dim);
        temb_ = temb2.forward(temb_act.forward(temb1.forward(sin)));
        return temb_;
    }

    void temb_backward(const Tensor& g) {
        (void)temb1.backward(temb_act.backward(temb2.backward(g)));
    }

    static Tensor concat_ch(const Tensor& a, const Tensor& b) {
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

    Tensor forward(const Tensor& x, const Tensor& ctx, const std::vector<int>& t) {
        Tensor temb = temb_forward(t);
        Tensor h0 = conv_in.forward(x);
        h1_ = enc_attn1.forward(enc_res1.forward(h0, temb), ctx);
        Tensor h2 = down.forward(h1_);
        Tensor h3 = enc_attn2.forward(enc_res2.forward(h2, temb), ctx);
        Tensor m = mid_res2.forward(mid_attn.forward(mid_res1.forward(h3, temb), ctx), temb);
        Tensor u = up_conv.forward(up.forward(m));
        Tensor cat = concat_ch(u, h1_);
        Tensor d = dec_attn.forward(dec_res.forward(cat, temb), ctx);
        return conv_out.forward(out_act.forward(out_gn.forward(d)));
    }

    Tensor backward(const Tensor& geps, Tensor& gctx) {
        Tensor gtemb_total({temb_.shape[0], temb_.shape[1]});
        Tensor gt;

        Tensor gd = out_gn.backward(out_act.backward(conv_out.backward(geps)));
        Tensor gctx_acc;
        Tensor gcat_pre = dec_attn.backward(gd, gctx_acc);
        gctx = gctx_acc;
        Tensor gcat = dec_res.backward(gcat_pre, gt);
        axpy(gtemb_total, 1.0, gt);

        Tensor gu, gh1_cat;
        split_ch(gcat, cfg.base_channels, gu, gh1_cat);
        Tensor gm = up.backward(up_conv.backward(gu));

        Tensor gx2 = mid_res2.backward(gm, gt);
        axpy(gtemb_total, 1.0, gt);
        Tensor gmid = mid_attn.backward(gx2, gctx_acc);
        axpy(gctx, 1.0, gctx_acc);
        Tensor gh3 = mid_res1.backward(gmid, gt);
        axpy(gtemb_total, 1.0, gt);

        Tensor gh2_pre = enc_attn2.backward(gh3, gctx_acc);
        axpy(gctx, 1.0, gctx_acc);
        Tensor gh2 = enc_res2.backward(gh2_pre, gt);
        axpy(gtemb_total, 1.0, gt);

        Tensor gh1 = down.backward(gh2);
        axpy(gh1, 1.0, gh1_cat);

        Tensor gh0_pre = enc_attn1.backward(gh1, gctx_acc);
        axpy(gctx, 1.0, gctx_acc);
        Tensor gh0 = enc_res1.backward(gh0_pre, gt);
        axpy(gtemb_total, 1.0, gt);

        Tensor gx = conv_in.backward(gh0);
        temb_backward(gtemb_total);
        return gx;
    }

    void collect(std::vector<nn::ParamRef>& out) {
        temb1.collect_params(out, "unet.temb1");
        temb2.collect_params(out, "unet.temb2");
        conv_in.collect_params(out, "unet.in");
        enc_res1.collect_params(out, "unet.enc_res1");
        enc_attn1.collect_params(out, "unet.enc_attn1");
        down.collect_params(out, "unet.down");
        enc_res2.collect_params(out, "unet.enc_res2");
        enc_attn2.collect_params(out, "unet.enc_attn2");
        mid_res1.collect_params(out, "unet.mid_res1");
        mid_attn.collect_params(out, "unet.mid_attn");
        mid_res2.collect_params(out, "unet.mid_res2");
        up_conv.collect_params(out, "unet.up_conv");
        dec_res.collect_params(out, "unet.dec_res");
        dec_attn.collect_params(out, "unet.dec_attn");
        out_gn.collect_params(out, "unet.out_gn");
        conv_out.collect_params(out, "unet.out");
    }
};

UNet2d::UNet2d(const UNet2dConfig& config, uint64_t init_seed) : config_(config) {
    Rng rng(init_seed, "unet2d_init");
    impl_ = std::make_shared<Impl>(config, rng);
}

Tensor UNet2d::forward(const Tensor& x, const Tensor& ctx, const std::vector<int>& t) {
    if (x.shape[1] != config_.in_channels)
        throw ValidationError("x", "expected " + std::to_string(config_.in_channels) +
                                       " input channels, got " + std::to_string(x.shape[1]));
    return impl_->forward(x, ctx, t);
}

Tensor UNet2d::backward(const Tensor& geps, Tensor& gctx) {
    return impl_->backward(geps, gctx);
}

std::vector<nn::ParamRef> UNet2d::params() {
    std::vector<nn::ParamRef> out;
    impl_->collect(out);
    return out;
}

}  // namespace objswap
