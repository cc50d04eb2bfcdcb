#include "objswap/nn.hpp"

#include "objswap/errors.hpp"

#include <Eigen/Dense>

#include <cassert>
#include <cmath>

namespace objswap::nn {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void zero_grads(const std::vector<ParamRef>& params) {
    for (const auto& p : params)
        p.grad->zero();
}

int64_t param_count(const std::vector<ParamRef>& params) {
    int64_t n = 0;
    for (const auto& p : params)
        n += p.value->numel();
    return n;
}

void init_normal(Tensor& t, Rng& rng, double scale) {
    for (auto& v : t.data)
        v = rng.normal() * scale;
}

// ---- Linear -----------------------------------------------------------------

Linear::Linear(int in, int out, Rng& rng, double scale)
    : in_dim(in), out_dim(out), W({out, in}), b({out}), dW({out, in}), db({out}) {
    init_normal(W, rng, scale > 0 ? scale : std::sqrt(2.0 / in));
}

Tensor Linear::forward(const Tensor& x) {
    x_ = x;
    int B = x.shape[0];
    Tensor y({B, out_dim});
    ECMap xm(x.ptr(), B, in_dim);
    ECMap wm(W.ptr(), out_dim, in_dim);
    EMap ym(y.ptr(), B, out_dim);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < out_dim; ++j)
            y.at(i, j) += b[j];
    return y;
}

Tensor Linear::backward(const Tensor& gy) {
    int B = gy.shape[0];
    ECMap gym(gy.ptr(), B, out_dim);
    ECMap xm(x_.ptr(), B, in_dim);
    ECMap wm(W.ptr(), out_dim, in_dim);
    EMap dwm(dW.ptr(), out_dim, in_dim);
    dwm.noalias() += gym.transpose() * xm;
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < out_dim; ++j)
            db[j] += gy.at(i, j);
    Tensor gx({B, in_dim});
    EMap gxm(gx.ptr(), B, in_dim);
    gxm.noalias() = gym * wm;
    return gx;
}

void Linear::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", &W, &dW});
    out.push_back({prefix + ".b", &b, &db});
}

// ---- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(int in_c, int out_c, int k, int stride_, int pad_, Rng& rng, bool zero_init)
    : in_ch(in_c), out_ch(out_c), ksize(k), stride(stride_), pad(pad_),
      W({out_c, in_c * k * k}), b({out_c}), dW({out_c, in_c * k * k}), db({out_c}) {
    if (!zero_init)
        init_normal(W, rng, std::sqrt(2.0 / (in_c * k * k)));
}

namespace {

void im2col(const Tensor& x, int b, int k, int stride, int pad, int oh, int ow, double* col) {
    // col: [C*k*k, oh*ow] row-major
    int C = x.shape[1], H = x.shape[2], Wd = x.shape[3];
    int P = oh * ow;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                double* row = col + (size_t)((c * k + i) * k + j) * P;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + i - pad;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < ow; ++ox)
                            row[oy * ow + ox] = 0.0;
                        continue;
                    }
                    const double* src = x.ptr() + (((size_t)b * C + c) * H + iy) * Wd;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + j - pad;
                        row[oy * ow + ox] = (ix >= 0 && ix < Wd) ? src[ix] : 0.0;
                    }
                }
            }
}

void col2im_add(const double* col, int k, int stride, int pad, int oh, int ow, Tensor& gx, int b) {
    int C = gx.shape[1], H = gx.shape[2], Wd = gx.shape[3];
    int P = oh * ow;
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                const double* row = col + (size_t)((c * k + i) * k + j) * P;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + i - pad;
                    if (iy < 0 || iy >= H)
                        continue;
                    double* dst = gx.ptr() + (((size_t)b * C + c) * H + iy) * Wd;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + j - pad;
                        if (ix >= 0 && ix < Wd)
                            dst[ix] += row[oy * ow + ox];
                    }
                }
            }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x) {
    x_ = x;
    int B = x.shape[0], H = x.shape[2], Wd = x.shape[3];
    out_h_ = (H + 2 * pad - ksize) / stride + 1;
    out_w_ = (Wd + 2 * pad - ksize) / stride + 1;
    int P = out_h_ * out_w_;
    int K = in_ch * ksize * ksize;
    Tensor y({B, out_ch, out_h_, out_w_});
    std::vector<double> col((size_t)K * P);
    ECMap wm(W.ptr(), out_ch, K);
    for (int bi = 0; bi < B; ++bi) {
        im2col(x, bi, ksize, stride, pad, out_h_, out_w_, col.data());
        ECMap cm(col.data(), K, P);
        EMap ym(y.ptr() + (size_t)bi * out_ch * P, out_ch, P);
        ym.noalias() = wm * cm;
        for (int o = 0; o < out_ch; ++o)
            ym.row(o).array() += b[o];
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
    int B = x_.shape[0];
    int P = out_h_ * out_w_;
    int K = in_ch * ksize * ksize;
    Tensor gx = Tensor::zeros_like(x_);
    std::vector<double> col((size_t)K * P);
    std::vector<double> gcol((size_t)K * P);
    ECMap wm(W.ptr(), out_ch, K);
    EMap dwm(dW.ptr(), out_ch, K);
    for (int bi = 0; bi < B; ++bi) {
        im2col(x_, bi, ksize, stride, pad, out_h_, out_w_, col.data());
        ECMap cm(col.data(), K, P);
        ECMap gym(gy.ptr() + (size_t)bi * out_ch * P, out_ch, P);
        dwm.noalias() += gym * cm.transpose();
        for (int o = 0; o < out_ch; ++o)
            db[o] += gym.row(o).sum();
        EMap gcm(gcol.data(), K, P);
        gcm.noalias() = wm.transpose() * gym;
        col2im_add(gcol.data(), ksize, stride, pad, out_h_, out_w_, gx, bi);
    }
    return gx;
}

void Conv2d::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", &W, &dW});
    out.push_back({prefix + ".b", &b, &db});
}

// ---- GroupNorm ----------------------------------------------------------------

GroupNorm::GroupNorm(int channels_, int groups_)
    : channels(channels_), groups(groups_), gamma({channels_}), beta({channels_}),
      dgamma({channels_}), dbeta({channels_}) {
    if (channels % groups != 0)
        throw ValidationError("groups", "channels not divisible by groups");
    gamma.fill(1.0);
}

Tensor GroupNorm::forward(const Tensor& x) {
    x_ = x;
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int cg = C / groups;
    int64_t m = (int64_t)cg * H * W;
    Tensor y = Tensor::zeros_like(x);
    xhat_ = Tensor::zeros_like(x);
    mean_.assign((size_t)B * groups, 0.0);
    inv_std_.assign((size_t)B * groups, 0.0);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            const double* xs = x.ptr() + ((size_t)b * C + (size_t)g * cg) * H * W;
            double mu = 0;
            for (int64_t i = 0; i < m; ++i)
                mu += xs[i];
            mu /= (double)m;
            double var = 0;
            for (int64_t i = 0; i < m; ++i) {
                double d = xs[i] - mu;
                var += d * d;
            }
            var /= (double)m;
            double is = 1.0 / std::sqrt(var + eps);
            mean_[(size_t)b * groups + g] = mu;
            inv_std_[(size_t)b * groups + g] = is;
            double* xh = xhat_.ptr() + ((size_t)b * C + (size_t)g * cg) * H * W;
            double* yp = y.ptr() + ((size_t)b * C + (size_t)g * cg) * H * W;
            for (int ci = 0; ci < cg; ++ci) {
                double ga = gamma[(size_t)g * cg + ci], be = beta[(size_t)g * cg + ci];
                for (int64_t i = (int64_t)ci * H * W; i < (int64_t)(ci + 1) * H * W; ++i) {
                    xh[i] = (xs[i] - mu) * is;
                    yp[i] = ga * xh[i] + be;
                }
            }
        }
    return y;
}

Tensor GroupNorm::backward(const Tensor& gy) {
    int B = x_.shape[0], C = x_.shape[1], H = x_.shape[2], W = x_.shape[3];
    int cg = C / groups;
    int64_t m = (int64_t)cg * H * W;
    int64_t hw = (int64_t)H * W;
    Tensor gx = Tensor::zeros_like(x_);
    for (int b = 0; b < B; ++b)
        for (int g = 0; g < groups; ++g) {
            size_t base = ((size_t)b * C + (size_t)g * cg) * hw;
            const double* xh = xhat_.ptr() + base;
            const double* gyp = gy.ptr() + base;
            double is = inv_std_[(size_t)b * groups + g];
            // per-channel param grads, and the two reductions for dx
            double sum_gxh = 0, sum_gxh_xh = 0;
            for (int ci = 0; ci < cg; ++ci) {
                double ga = gamma[(size_t)g * cg + ci];
                double dg = 0, dbta = 0;
                for (int64_t i = ci * hw; i < (ci + 1) * hw; ++i) {
                    dg += gyp[i] * xh[i];
                    dbta += gyp[i];
                    double gxh = gyp[i] * ga;
                    sum_gxh += gxh;
                    sum_gxh_xh += gxh * xh[i];
                }
                dgamma[(size_t)g * cg + ci] += dg;
                dbeta[(size_t)g * cg + ci] += dbta;
            }
            double* gxp = gx.ptr() + base;
            for (int ci = 0; ci < cg; ++ci) {
                double ga = gamma[(size_t)g * cg + ci];
                for (int64_t i = ci * hw; i < (ci + 1) * hw; ++i) {
                    double gxh = gyp[i] * ga;
                    gxp[i] = is * (gxh - sum_gxh / (double)m - xh[i] * sum_gxh_xh / (double)m);
                }
            }
        }
    return gx;
}

void GroupNorm::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma, &dgamma});
    out.push_back({prefix + ".beta", &beta, &dbeta});
}

// ---- SiLU ---------------------------------------------------------------------

Tensor SiLU::forward(const Tensor& x) {
    x_ = x;
    Tensor y = Tensor::zeros_like(x);
    for (int64_t i = 0; i < x.numel(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x[i]));
        y[i] = x[i] * s;
    }
    return y;
}

Tensor SiLU::backward(const Tensor& gy) {
    Tensor gx = Tensor::zeros_like(x_);
    for (int64_t i = 0; i < x_.numel(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x_[i]));
        gx[i] = gy[i] * s * (1.0 + x_[i] * (1.0 - s));
    }
    return gx;
}

// ---- Upsample2x -----------------------------------------------------------------

Tensor Upsample2x::forward(const Tensor& x) {
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    in_h_ = H;
    in_w_ = W;
    Tensor y({B, C, 2 * H, 2 * W});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int yy = 0; yy < 2 * H; ++yy)
                for (int xx = 0; xx < 2 * W; ++xx)
                    y.at(b, c, yy, xx) = x.at(b, c, yy / 2, xx / 2);
    return y;
}

Tensor Upsample2x::backward(const Tensor& gy) {
    int B = gy.shape[0], C = gy.shape[1];
    Tensor gx({B, C, in_h_, in_w_});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int yy = 0; yy < 2 * in_h_; ++yy)
                for (int xx = 0; xx < 2 * in_w_; ++xx)
                    gx.at(b, c, yy / 2, xx / 2) += gy.at(b, c, yy, xx);
    return gx;
}

// ---- GlobalAvgPool ---------------------------------------------------------------

Tensor GlobalAvgPool::forward(const Tensor& x) {
    int B = x.shape[0], C = x.shape[1];
    h_ = x.shape[2];
    w_ = x.shape[3];
    Tensor y({B, C});
    double inv = 1.0 / ((double)h_ * w_);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double s = 0;
            for (int yy = 0; yy < h_; ++yy)
                for (int xx = 0; xx < w_; ++xx)
                    s += x.at(b, c, yy, xx);
            y.at(b, c) = s * inv;
        }
    return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy) {
    int B = gy.shape[0], C = gy.shape[1];
    Tensor gx({B, C, h_, w_});
    double inv = 1.0 / ((double)h_ * w_);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double g = gy.at(b, c) * inv;
            for (int yy = 0; yy < h_; ++yy)
                for (int xx = 0; xx < w_; ++xx)
                    gx.at(b, c, yy, xx) = g;
        }
    return gx;
}

// ---- attention helpers ------------------------------------------------------------

namespace {

// rows of S -> softmax probabilities, in place
void softmax_rows(EMat& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        double mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
    }
}

// given A = softmax(S) and gA, returns gS
EMat softmax_backward_rows(const EMat& a, const EMat& ga) {
    EMat gs = a;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        double dotv = (ga.row(r).array() * a.row(r).array()).sum();
        gs.row(r) = (ga.row(r).array() - dotv) * a.row(r).array();
    }
    return gs;
}

}  // namespace

// ---- CrossAttention -----------------------------------------------------------------

CrossAttention::CrossAttention(int channels_, int ctx_dim_, Rng& rng)
    : channels(channels_), ctx_dim(ctx_dim_),
      Wq({channels_, channels_}), Wk({channels_, ctx_dim_}), Wv({channels_, ctx_dim_}),
      Wo({channels_, channels_}), dWq({channels_, channels_}), dWk({channels_, ctx_dim_}),
      dWv({channels_, ctx_dim_}), dWo({channels_, channels_}) {
    init_normal(Wq, rng, std::sqrt(1.0 / channels_));
    init_normal(Wk, rng, std::sqrt(1.0 / ctx_dim_));
    init_normal(Wv, rng, std::sqrt(1.0 / ctx_dim_));
    // Wo stays zero: the residual path is identity until training moves it.
}

Tensor CrossAttention::forward(const Tensor& x, const Tensor& ctx) {
    x_ = x;
    ctx_ = ctx;
    int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int T = ctx.shape[1];
    int P = H * W;
    q_.assign(B, Tensor());
    K_.assign(B, Tensor());
    V_.assign(B, Tensor());
    A_.assign(B, Tensor());
    O_.assign(B, Tensor());
    Tensor y = x;
    double scale = 1.0 / std::sqrt((double)C);
    ECMap wq(Wq.ptr(), C, C), wk(Wk.ptr(), C, ctx_dim), wv(Wv.ptr(), C, ctx_dim), wo(Wo.ptr(), C, C);
    for (int b = 0; b < B; ++b) {
        // X as [P, C]: positions by channel — gather from CHW layout
        EMat X(P, C);
        for (int c = 0; c < C; ++c) {
            const double* src = x.ptr() + ((size_t)b * C + c) * P;
            for (int p = 0; p < P; ++p)
                X(p, c) = src[p];
        }
        ECMap ctxm(ctx.ptr() + (size_t)b * T * ctx_dim, T, ctx_dim);
        EMat q = X * wq.transpose();          // [P,C]
        EMat K = ctxm * wk.transpose();       // [T,C]
        EMat V = ctxm * wv.transpose();       // [T,C]
        EMat S = q * K.transpose() * scale;   // [P,T]
        softmax_rows(S);
        EMat O = S * V;                       // [P,C]
        EMat R = O * wo.transpose();          // [P,C]
        for (int c = 0; c < C; ++c) {
            double* dst = y.ptr() + ((size_t)b * C + c) * P;
            for (int p = 0; p < P; ++p)
                dst[p] += R(p, c);
        }
        auto stash = [](Tensor& t, const EMat& m) {
            t = Tensor({(int)m.rows(), (int)m.cols()});
            EMap(t.ptr(), m.rows(), m.cols()) = m;
        };
        stash(q_[b], q);
        stash(K_[b], K);
        stash(V_[b], V);
        stash(A_[b], S);
        stash(O_[b], O);
    }
    return y;
}

Tensor CrossAttention::backward(const Tensor& gy, Tensor& gctx_out) {
    int B = x_.shape[0], C = x_.shape[1], H = x_.shape[2], W = x_.shape[3];
    int T = ctx_.shape[1];
    int P = H * W;
    double scale = 1.0 / std::sqrt((double)C);
    Tensor gx = gy;  // residual path
    gctx_out = Tensor({B, T, ctx_dim});
    ECMap wq(Wq.ptr(), C, C), wk(Wk.ptr(), C, ctx_dim), wv(Wv.ptr(), C, ctx_dim), wo(Wo.ptr(), C, C);
    EMap dwq(dWq.ptr(), C, C), dwk(dWk.ptr(), C, ctx_dim), dwv(dWv.ptr(), C, ctx_dim), dwo(dWo.ptr(), C, C);
    for (int b = 0; b < B; ++b) {
        EMat gR(P, C), X(P, C);
        for (int c = 0; c < C; ++c) {
            const double* gsrc = gy.ptr() + ((size_t)b * C + c) * P;
            const double* xsrc = x_.ptr() + ((size_t)b * C + c) * P;
            for (int p = 0; p < P; ++p) {
                gR(p, c) = gsrc[p];
                X(p, c) = xsrc[p];
            }
        }
        ECMap q(q_[b].ptr(), P, C), K(K_[b].ptr(), T, C), V(V_[b].ptr(), T, C);
        ECMap A(A_[b].ptr(), P, T), O(O_[b].ptr(), P, C);
        ECMap ctxm(ctx_.ptr() + (size_t)b * T * ctx_dim, T, ctx_dim);

        dwo.noalias() += gR.transpose() * O;
        EMat gO = gR * wo;                       // [P,C]
        EMat gA = gO * V.transpose();            // [P,T]
        EMat gV = A.transpose() * gO;            // [T,C]
        EMat gS = softmax_backward_rows(A, gA);  // [P,T]
        EMat gq = gS * K * scale;                // [P,C]
        EMat gK = gS.transpose() * q * scale;    // [T,C]

        dwq.noalias() += gq.transpose() * X;
        dwk.noalias() += gK.transpose() * ctxm;
        dwv.noalias() += gV.transpose() * ctxm;

        EMat gX = gq * wq;  // [P,C]
        for (int c = 0; c < C; ++c) {
            double* dst = gx.ptr() + ((size_t)b * C + c) * P;
            for (int p = 0; p < P; ++p)
                dst[p] += gX(p, c);
        }
        EMat gctx = gK * wk + gV * wv;  // [T,ctx_dim]
        EMap(gctx_out.ptr() + (size_t)b * T * ctx_dim, T, ctx_dim) = gctx;
    }
    return gx;
}

void CrossAttention::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".Wq", &Wq, &dWq});
    out.push_back({prefix + ".Wk", &Wk, &dWk});
    out.push_back({prefix + ".Wv", &Wv, &dWv});
    out.push_back({prefix + ".Wo", &Wo, &dWo});
}

// ---- TemporalAttention -----------------------------------------------------------------

TemporalAttention::TemporalAttention(int channels_, int num_frames_, Rng& rng)
    : channels(channels_), num_frames(num_frames_),
      Wq({channels_, channels_}), Wk({channels_, channels_}), Wv({channels_, channels_}),
      Wo({channels_, channels_}), pos({num_frames_, channels_}),
      dWq({channels_, channels_}), dWk({channels_, channels_}), dWv({channels_, channels_}),
      dWo({channels_, channels_}), dpos({num_frames_, channels_}) {
    init_normal(Wq, rng, std::sqrt(1.0 / channels_));
    init_normal(Wk, rng, std::sqrt(1.0 / channels_));
    init_normal(Wv, rng, std::sqrt(1.0 / channels_));
    init_normal(pos, rng, 0.02);
    // Wo zero-init: identity mapping before training
}

Tensor TemporalAttention::forward(const Tensor& x, int batch) {
    x_ = x;
    b_ = batch;
    int BN = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int N = num_frames;
    if (BN != batch * N)
        throw ValidationError("batch", "temporal attention expects B*N rows");
    p_ = H * W;
    int P = p_;
    int nseq = batch * P;
    U_.assign(nseq, Tensor());
    q_.assign(nseq, Tensor());
    K_.assign(nseq, Tensor());
    V_.assign(nseq, Tensor());
    A_.assign(nseq, Tensor());
    O_.assign(nseq, Tensor());
    Tensor y = x;
    double scale = 1.0 / std::sqrt((double)C);
    ECMap wq(Wq.ptr(), C, C), wk(Wk.ptr(), C, C), wv(Wv.ptr(), C, C), wo(Wo.ptr(), C, C);
    ECMap posm(pos.ptr(), N, C);
    for (int b = 0; b < batch; ++b)
        for (int p = 0; p < P; ++p) {
            int s = b * P + p;
            EMat U(N, C);
            for (int n = 0; n < N; ++n) {
                const double* src = x.ptr() + ((size_t)(b * N + n) * C) * P;
                for (int c = 0; c < C; ++c)
                    U(n, c) = src[(size_t)c * P + p] + posm(n, c);
            }
            EMat q = U * wq.transpose();
            EMat K = U * wk.transpose();
            EMat V = U * wv.transpose();
            EMat S = q * K.transpose() * scale;
            softmax_rows(S);
            EMat O = S * V;
            EMat R = O * wo.transpose();
            for (int n = 0; n < N; ++n) {
                double* dst = y.ptr() + ((size_t)(b * N + n) * C) * P;
                for (int c = 0; c < C; ++c)
                    dst[(size_t)c * P + p] += R(n, c);
            }
            auto stash = [](Tensor& t, const EMat& m) {
                t = Tensor({(int)m.rows(), (int)m.cols()});
                EMap(t.ptr(), m.rows(), m.cols()) = m;
            };
            stash(U_[s], U);
            stash(q_[s], q);
            stash(K_[s], K);
            stash(V_[s], V);
            stash(A_[s], S);
            stash(O_[s], O);
        }
    return y;
}

Tensor TemporalAttention::backward(const Tensor& gy) {
    int C = x_.shape[1];
    int N = num_frames, P = p_;
    double scale = 1.0 / std::sqrt((double)C);
    Tensor gx = gy;  // residual
    ECMap wq(Wq.ptr(), C, C), wk(Wk.ptr(), C, C), wv(Wv.ptr(), C, C), wo(Wo.ptr(), C, C);
    EMap dwq(dWq.ptr(), C, C), dwk(dWk.ptr(), C, C), dwv(dWv.ptr(), C, C), dwo(dWo.ptr(), C, C);
    EMap dposm(dpos.ptr(), N, C);
    for (int b = 0; b < b_; ++b)
        for (int p = 0; p < P; ++p) {
            int s = b * P + p;
            EMat gR(N, C);
            for (int n = 0; n < N; ++n) {
                const double* src = gy.ptr() + ((size_t)(b * N + n) * C) * P;
                for (int c = 0; c < C; ++c)
                    gR(n, c) = src[(size_t)c * P + p];
            }
            ECMap U(U_[s].ptr(), N, C), q(q_[s].ptr(), N, C), K(K_[s].ptr(), N, C),
                V(V_[s].ptr(), N, C), A(A_[s].ptr(), N, N), O(O_[s].ptr(), N, C);

            dwo.noalias() += gR.transpose() * O;
            EMat gO = gR * wo;
            EMat gA = gO * V.transpose();
            EMat gV = A.transpose() * gO;
            EMat gS = softmax_backward_rows(A, gA);
            EMat gq = gS * K * scale;
            EMat gK = gS.transpose() * q * scale;

            dwq.noalias() += gq.transpose() * U;
            dwk.noalias() += gK.transpose() * U;
            dwv.noalias() += gV.transpose() * U;

            EMat gU = gq * wq + gK * wk + gV * wv;
            dposm.noalias() += gU;
            for (int n = 0; n < N; ++n) {
                double* dst = gx.ptr() + ((size_t)(b * N + n) * C) * P;
                for (int c = 0; c < C; ++c)
                    dst[(size_t)c * P + p] += gU(n, c);
            }
        }
    return gx;
}

void TemporalAttention::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    out.push_back({prefix + ".Wq", &Wq, &dWq});
    out.push_back({prefix + ".Wk", &Wk, &dWk});
    out.push_back({prefix + ".Wv", &Wv, &dWv});
    out.push_back({prefix + ".Wo", &Wo, &dWo});
    out.push_back({prefix + ".pos", &pos, &dpos});
}

// ---- ResBlock -----------------------------------------------------------------

ResBlock::ResBlock(int in_c, int out_c, int emb_dim, Rng& rng)
    : in_ch(in_c), out_ch(out_c), gn1(in_c, std::min(4, in_c)), gn2(out_c, std::min(4, out_c)),
      conv1(in_c, out_c, 3, 1, 1, rng), conv2(out_c, out_c, 3, 1, 1, rng, /*zero_init=*/true),
      emb_proj(emb_dim, out_c, rng) {
    if (in_c != out_c)
        skip = std::make_unique<Conv2d>(in_c, out_c, 1, 1, 0, rng);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb) {
    x_ = x;
    int B = x.shape[0];
    emb_b_ = temb.shape[0];
    Tensor h = conv1.forward(act1.forward(gn1.forward(x)));
    Tensor e = emb_proj.forward(act_emb.forward(temb));  // [Be, out_ch]
    int P = h.shape[2] * h.shape[3];
    int rep = B / emb_b_;  // frames per temb row (video nets repeat rows)
    for (int b = 0; b < B; ++b) {
        const double* ep = e.ptr() + (size_t)(b / rep) * out_ch;
        double* hp = h.ptr() + (size_t)b * out_ch * P;
        for (int c = 0; c < out_ch; ++c)
            for (int p = 0; p < P; ++p)
                hp[(size_t)c * P + p] += ep[c];
    }
    Tensor out = conv2.forward(act2.forward(gn2.forward(h)));
    Tensor sk = skip ? skip->forward(x) : x;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] += sk[i];
    return out;
}

Tensor ResBlock::backward(const Tensor& gy, Tensor& gtemb_out) {
    int B = x_.shape[0];
    Tensor gh = gn2.backward(act2.backward(conv2.backward(gy)));
    // emb grad: sum over spatial and over repeated frames
    int P = gh.shape[2] * gh.shape[3];
    int rep = B / emb_b_;
    Tensor ge({emb_b_, out_ch});
    for (int b = 0; b < B; ++b) {
        double* gep = ge.ptr() + (size_t)(b / rep) * out_ch;
        const double* ghp = gh.ptr() + (size_t)b * out_ch * P;
        for (int c = 0; c < out_ch; ++c) {
            double s = 0;
            for (int p = 0; p < P; ++p)
                s += ghp[(size_t)c * P + p];
            gep[c] += s;
        }
    }
    gtemb_out = act_emb.backward(emb_proj.backward(ge));
    Tensor gx = gn1.backward(act1.backward(conv1.backward(gh)));
    if (skip) {
        Tensor gsk = skip->backward(gy);
        for (int64_t i = 0; i < gx.numel(); ++i)
            gx[i] += gsk[i];
    } else {
        for (int64_t i = 0; i < gx.numel(); ++i)
            gx[i] += gy[i];
    }
    return gx;
}

void ResBlock::collect_params(std::vector<ParamRef>& out, const std::string& prefix) {
    gn1.collect_params(out, prefix + ".gn1");
    conv1.collect_params(out, prefix + ".conv1");
    emb_proj.collect_params(out, prefix + ".emb");
    gn2.collect_params(out, prefix + ".gn2");
    conv2.collect_params(out, prefix + ".conv2");
    if (skip)
        skip->collect_params(out, prefix + ".skip");
}

// ---- misc -----------------------------------------------------------------

Tensor timestep_embedding(const std::vector<int>& t, int dim) {
    int B = (int)t.size();
    Tensor e({B, dim});
    int half = dim / 2;
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * i / (double)half);
            e.at(b, 2 * i) = std::sin(t[(size_t)b] * freq);
            e.at(b, 2 * i + 1) = std::cos(t[(size_t)b] * freq);
        }
    return e;
}

void Adam::step(const std::vector<ParamRef>& params) {
    if (m_.size() != params.size()) {
        m_.clear();
        v_.clear();
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros_like(*p.value));
            v_.push_back(Tensor::zeros_like(*p.value));
        }
    }
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, (double)step_count);
    double bc2 = 1.0 - std::pow(beta2, (double)step_count);
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor& w = *params[k].value;
        const Tensor& g = *params[k].grad;
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (int64_t i = 0; i < w.numel(); ++i) {
            m[i] = beta1 * m[i] + (1 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
            double mh = m[i] / bc1, vh = v[i] / bc2;
            w[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

void Adam::reset() {
    m_.clear();
    v_.clear();
    step_count = 0;
}

}  // namespace objswap::nn
