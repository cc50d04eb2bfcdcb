#include "objswap/checkpoint.hpp"
#include "objswap/codec.hpp"
#include "objswap/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

using namespace objswap;

namespace {

CodecConfig tiny_config() {
    CodecConfig c;
    c.c0 = 4;
    c.c1 = 4;
    c.c2 = 8;
    c.c3 = 8;
    c.dec_c0 = 4;
    return c;
}

Tensor randn_img(Rng& rng, int h, int w) {
    Tensor t({3, h, w});
    for (auto& v : t.data)
        v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("latent factor is exactly /8 with 4 channels") {
    CodecModel model(tiny_config(), 3);
    Rng rng(1);
    for (int res : {16, 64, 128, 256}) {
        Tensor z = model.encode(randn_img(rng, res, res));
        CHECK(z.shape == std::vector<int>{4, res / 8, res / 8});
    }
    // non-square but divisible dims
    Tensor z = model.encode(randn_img(rng, 24, 64));
    CHECK(z.shape == std::vector<int>{4, 3, 8});

    CHECK_THROWS_AS(model.encode(randn_img(rng, 20, 20)), ValidationError);
    CHECK_THROWS_AS(model.encode(Tensor({1, 64, 64})), ValidationError);
}

TEST_CASE("encode/decode are deterministic and bounded") {
    CodecModel model(tiny_config(), 5);
    Rng rng(2);
    Tensor frame = randn_img(rng, 32, 32);
    Tensor z1 = model.encode(frame);
    Tensor z2 = model.encode(frame);
    CHECK(mse(z1, z2) == 0.0);

    Tensor out = model.decode(z1);
    CHECK(out.shape == std::vector<int>{3, 32, 32});
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    Tensor zero({4, 4, 4});
    Tensor d1 = model.decode(zero);
    Tensor d2 = model.decode(zero);
    CHECK(mse(d1, d2) == 0.0);
}

TEST_CASE("codec reconstruction loss gradient matches finite differences") {
    CodecConfig cfg = tiny_config();
    CodecModel model(cfg, 7);
    auto params = model.params();
    Rng rng(3);
    Tensor x({1, 3, 8, 8});
    for (auto& v : x.data)
        v = rng.uniform();
    Tensor eps({1, cfg.latent_channels, 1, 1});
    rng.fill_normal(eps.data);
    const double klw = cfg.kl_weight;

    auto eval = [&](bool bw) {
        auto [mu, lv] = model.encode_train(x);
        Tensor z = Tensor::zeros_like(mu);
        for (int64_t i = 0; i < z.numel(); ++i)
            z[i] = mu[i] + std::exp(0.5 * lv[i]) * eps[i];
        Tensor xhat = model.decode_train(z);
        double rec = mse(xhat, x);
        double kl = 0;
        for (int64_t i = 0; i < mu.numel(); ++i)
            kl += 0.5 * (mu[i] * mu[i] + std::exp(lv[i]) - 1.0 - lv[i]);
        kl /= (double)mu.numel();
        if (bw) {
            Tensor gxhat = Tensor::zeros_like(xhat);
            double rs = 2.0 / (double)xhat.numel();
            for (int64_t i = 0; i < xhat.numel(); ++i)
                gxhat[i] = rs * (xhat[i] - x[i]);
            Tensor gz = model.decoder_backward(gxhat);
            Tensor gmu = Tensor::zeros_like(mu), glv = Tensor::zeros_like(lv);
            double ks = klw / (double)mu.numel();
            for (int64_t i = 0; i < mu.numel(); ++i) {
                gmu[i] = gz[i] + ks * mu[i];
                glv[i] = gz[i] * eps[i] * 0.5 * std::exp(0.5 * lv[i]) +
                         ks * 0.5 * (std::exp(lv[i]) - 1.0);
            }
            model.encoder_backward(gmu, glv);
        }
        return rec + klw * kl;
    };

    nn::zero_grads(params);
    (void)eval(true);
    std::vector<Tensor> grads;
    for (auto& p : params)
        grads.push_back(*p.grad);

    Rng pick(11);
    double worst = 0;
    for (int k = 0; k < 20; ++k) {
        size_t pi = pick.uniform_index(params.size());
        int64_t ei = (int64_t)pick.uniform_index((uint64_t)params[pi].value->numel());
        double* v = &(*params[pi].value)[ei];
        double saved = *v;
        double h = 1e-5 * std::max(1.0, std::fabs(saved));
        *v = saved + h;
        double lp = eval(false);
        *v = saved - h;
        double lm = eval(false);
        *v = saved;
        double fd = (lp - lm) / (2 * h);
        double g = grads[pi][ei];
        worst = std::max(worst, std::fabs(fd - g) / std::max({std::fabs(fd), std::fabs(g), 1e-6}));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("one optimizer step changes codec parameters") {
    CodecConfig cfg = tiny_config();
    CodecModel model(cfg, 9);
    auto params = model.params();
    std::vector<Tensor> before;
    for (auto& p : params)
        before.push_back(*p.value);

    Rng rng(4);
    Tensor x({2, 3, 16, 16});
    for (auto& v : x.data)
        v = rng.uniform();
    nn::zero_grads(params);
    auto [mu, lv] = model.encode_train(x);
    Tensor eps = Tensor::zeros_like(mu);
    rng.fill_normal(eps.data);
    Tensor z = Tensor::zeros_like(mu);
    for (int64_t i = 0; i < z.numel(); ++i)
        z[i] = mu[i] + std::exp(0.5 * lv[i]) * eps[i];
    Tensor xhat = model.decode_train(z);
    Tensor gxhat = Tensor::zeros_like(xhat);
    for (int64_t i = 0; i < xhat.numel(); ++i)
        gxhat[i] = 2.0 / xhat.numel() * (xhat[i] - x[i]);
    Tensor gz = model.decoder_backward(gxhat);
    model.encoder_backward(gz, Tensor::zeros_like(lv));
    nn::Adam adam;
    adam.lr = 1e-3;
    adam.step(params);

    double delta = 0;
    for (size_t i = 0; i < params.size(); ++i)
        for (int64_t k = 0; k < params[i].value->numel(); ++k) {
            double d = (*params[i].value)[k] - before[i][k];
            delta += d * d;
        }
    CHECK(delta > 0.0);
}

TEST_CASE("codec checkpoint round trip and refusals") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "objswap_codec_ckpt";
    fs::create_directories(dir);
    std::string path = (dir / "codec.oswp").string();

    CodecModel model(tiny_config(), 13);
    model.latent_scale = 2.5;
    save_codec(model, path);
    CodecModel back = load_codec(path);
    CHECK(back.latent_scale == 2.5);
    Rng rng(5);
    Tensor frame = randn_img(rng, 16, 16);
    CHECK(mse(back.encode(frame), model.encode(frame)) == 0.0);

    // kind mismatch refused
    CHECK_THROWS_AS(load_checkpoint(path, "stage1"), CheckpointError);

    // version mismatch refused: corrupt the version field in place
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        uint32_t bad = 999;
        f.write((const char*)&bad, 4);
    }
    CHECK_THROWS_AS(load_codec(path), CheckpointError);
    fs::remove_all(dir);
}
