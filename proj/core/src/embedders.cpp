#include "objswap/embedders.hpp"

#include "objswap/errors.hpp"

#include <cmath>

namespace objswap {

struct ConvEmbedder::Impl {
    nn::Conv2d c1, c2, c3;
    nn::GroupNorm g1, g2, g3;
    nn::SiLU a1, a2, a3;
    nn::GlobalAvgPool pool;
    nn::Linear proj;

    Impl(Rng& rng, int embed_dim)
        : c1(3, 16, 3, 2, 1, rng), c2(16, 32, 3, 2, 1, rng), c3(32, 64, 3, 2, 1, rng),
          g1(16, 4), g2(32, 4), g3(64, 4), proj(64, embed_dim, rng) {}

    Tensor forward(const Tensor& x) {
        Tensor h = a1.forward(g1.forward(c1.forward(x)));
        h = a2.forward(g2.forward(c2.forward(h)));
        h = a3.forward(g3.forward(c3.forward(h)));
        return proj.forward(pool.forward(h));
    }

    Tensor backward(const Tensor& gy) {
        Tensor g = pool.backward(proj.backward(gy));
        g = c3.backward(g1_pass(g3, a3, g));
        g = c2.backward(g1_pass(g2, a2, g));
        return c1.backward(g1_pass(g1, a1, g));
    }

    static Tensor g1_pass(nn::GroupNorm& gn, nn::SiLU& act, const Tensor& g) {
        return gn.backward(act.backward(g));
    }

    void collect(std::vector<nn::ParamRef>& out, const std::string& name) {
        c1.collect_params(out, name + ".c1");
        g1.collect_params(out, name + ".g1");
        c2.collect_params(out, name + ".c2");
        g2.collect_params(out, name + ".g2");
        c3.collect_params(out, name + ".c3");
        g3.collect_params(out, name + ".g3");
        proj.collect_params(out, name + ".proj");
    }
};

ConvEmbedder::ConvEmbedder(int input_res, int embed_dim, bool l2_normalize, uint64_t init_seed,
                           const std::string& name)
    : input_res_(input_res), embed_dim_(embed_dim), l2_(l2_normalize), name_(name) {
    Rng rng(init_seed, name + "_init");
    impl_ = std::make_shared<Impl>(rng, embed_dim);
}

Tensor ConvEmbedder::forward(const Tensor& x) {
    if (x.ndim() != 4 || x.shape[2] != input_res_ || x.shape[3] != input_res_)
        throw ValidationError("x", "embedder expects [B,3," + std::to_string(input_res_) + "," +
                                       std::to_string(input_res_) + "], got " + x.shape_str());
    Tensor y = impl_->forward(x);
    if (!l2_)
        return y;
    pre_norm_ = y;
    int B = y.shape[0];
    y_ = y;
    for (int b = 0; b < B; ++b) {
        double n2 = 0;
        for (int d = 0; d < embed_dim_; ++d)
            n2 += y.at(b, d) * y.at(b, d);
        double n = std::sqrt(std::max(n2, 1e-16));
        for (int d = 0; d < embed_dim_; ++d)
            y_.at(b, d) = y.at(b, d) / n;
    }
    return y_;
}

Tensor ConvEmbedder::backward(const Tensor& gy) {
    if (!l2_)
        return impl_->backward(gy);
    int B = gy.shape[0];
    Tensor g({B, embed_dim_});
    for (int b = 0; b < B; ++b) {
        double n2 = 0, dotv = 0;
        for (int d = 0; d < embed_dim_; ++d)
            n2 += pre_norm_.at(b, d) * pre_norm_.at(b, d);
        double n = std::sqrt(std::max(n2, 1e-16));
        for (int d = 0; d < embed_dim_; ++d)
            dotv += gy.at(b, d) * y_.at(b, d);
        for (int d = 0; d < embed_dim_; ++d)
            g.at(b, d) = (gy.at(b, d) - y_.at(b, d) * dotv) / n;
    }
    return impl_->backward(g);
}

std::vector<nn::ParamRef> ConvEmbedder::params() {
    std::vector<nn::ParamRef> out;
    impl_->collect(out, name_);
    return out;
}

Tensor prepare_object_input(const RefObjectImage& obj, int res, Resample mode) {
    int h = obj.rgba.shape[1], w = obj.rgba.shape[2];
    int side = std::max(h, w);
    Tensor canvas({4, side, side});
    int y0 = (side - h) / 2, x0 = (side - w) / 2;
    for (int c = 0; c < 4; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                canvas.at(c, y0 + y, x0 + x) = obj.rgba.at(c, y, x);
    Tensor sized = resize(canvas, res, res, mode);
    Tensor out({3, res, res});
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            double a = sized.at(3, y, x);
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) = a * sized.at(c, y, x);
        }
    return out;
}

Tensor prepare_context_input(const Tensor& frame, int res, Resample mode) {
    if (image_height(frame) == res && image_width(frame) == res)
        return frame;
    return resize(frame, res, res, mode);
}

}  // namespace objswap
