#include "objswap/diffusion.hpp"
#include "objswap/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace objswap;

namespace {

struct ZeroModel : EpsModel {
    Tensor forward(const Tensor& z_t, const std::vector<Tensor>&, const std::vector<int>&) override {
        return Tensor(z_t.shape);
    }
};

// Records the conditioning it receives.
struct SpyModel : EpsModel {
    std::vector<std::vector<Tensor>> seen;
    Tensor forward(const Tensor& z_t, const std::vector<Tensor>& conds,
                   const std::vector<int>&) override {
        seen.push_back(conds);
        return Tensor(z_t.shape);
    }
};

}  // namespace

TEST_CASE("schedule invariants hold over the config grid") {
    for (int T : {32, 64, 96, 256, 1000}) {
        NoiseSchedule lin = NoiseSchedule::linear(T);
        lin.validate();
        NoiseSchedule cos = NoiseSchedule::cosine(T);
        cos.validate();
        for (const NoiseSchedule& s : {lin, cos}) {
            CHECK(s.alpha_bars[1] > 0.9);
            CHECK(s.alpha_bars[(size_t)T] < 0.05);
            for (int t = 1; t <= T; ++t) {
                CHECK(s.alpha_bars[(size_t)t] < s.alpha_bars[(size_t)t - 1]);
                double a = std::sqrt(s.alpha_bars[(size_t)t]);
                double b = std::sqrt(1.0 - s.alpha_bars[(size_t)t]);
                CHECK(a * a + b * b == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
    CHECK_THROWS_AS(NoiseSchedule::linear(1), ValidationError);
}

TEST_CASE("forward_noise endpoints and interior") {
    Rng rng(1);
    Tensor z0({2, 3});
    Tensor eps({2, 3});
    rng.fill_normal(z0.data);
    rng.fill_normal(eps.data);

    // schedule limit alpha_bar = 1: z_t == z0 bitwise
    NoiseSchedule limit = NoiseSchedule::linear(4);
    limit.alpha_bars[2] = 1.0;
    Tensor zt = forward_noise(z0, 2, eps, limit);
    CHECK(mse(zt, z0) == 0.0);

    // limit alpha_bar = 0: z_t == eps bitwise
    limit.alpha_bars[3] = 0.0;
    Tensor ze = forward_noise(z0, 3, eps, limit);
    CHECK(mse(ze, eps) == 0.0);

    NoiseSchedule s = NoiseSchedule::linear(16);
    CHECK_THROWS_AS(forward_noise(z0, 0, eps, s), ValidationError);
    CHECK_THROWS_AS(forward_noise(z0, 17, eps, s), ValidationError);
}

TEST_CASE("loss_eps: exact-noise stub gives zero loss") {
    // The stub inverts the forward map from the captured z0.
    struct InvertModel : EpsModel {
        const Tensor* z0;
        const NoiseSchedule* sched;
        Tensor forward(const Tensor& z_t, const std::vector<Tensor>&,
                       const std::vector<int>& t) override {
            Tensor eps = Tensor(z_t.shape);
            int B = z_t.shape[0];
            int64_t row = z_t.numel() / B;
            for (int b = 0; b < B; ++b) {
                double sa = std::sqrt(sched->alpha_bars[(size_t)t[(size_t)b]]);
                double sb = std::sqrt(1.0 - sched->alpha_bars[(size_t)t[(size_t)b]]);
                for (int64_t i = b * row; i < (b + 1) * row; ++i)
                    eps[i] = (z_t[i] - sa * (*z0)[i]) / sb;
            }
            return eps;
        }
    };

    NoiseSchedule sched = NoiseSchedule::linear(64);
    Rng rng(3);
    DiffusionBatch batch;
    batch.z0 = Tensor({4, 2, 3, 3});
    rng.fill_normal(batch.z0.data);
    InvertModel model;
    model.z0 = &batch.z0;
    model.sched = &sched;
    CfgConfig cfg;
    cfg.dropout_prob = 0.0;
    LossInfo info = loss_eps(model, batch, sched, cfg, rng, false);
    CHECK(info.loss < 1e-20);
}

TEST_CASE("loss_eps: zero model loses ~1 per element") {
    NoiseSchedule sched = NoiseSchedule::linear(64);
    Rng rng(5);
    ZeroModel model;
    CfgConfig cfg;
    cfg.dropout_prob = 0.0;
    double acc = 0;
    int iters = 200;  // 200 x 50-element batches = 1e4 samples
    for (int k = 0; k < iters; ++k) {
        DiffusionBatch batch;
        batch.z0 = Tensor({1, 50});
        rng.fill_normal(batch.z0.data);
        acc += loss_eps(model, batch, sched, cfg, rng, false).loss;
    }
    CHECK(acc / iters == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("conditioning dropout: forced, independent, joint") {
    NoiseSchedule sched = NoiseSchedule::linear(16);
    Rng rng(7);
    // dropout 1.0: the model only ever sees null (zero) tokens
    {
        SpyModel spy;
        CfgConfig cfg;
        cfg.dropout_prob = 1.0;
        DiffusionBatch batch;
        batch.z0 = Tensor({2, 4});
        rng.fill_normal(batch.z0.data);
        batch.conds = {Tensor({2, 4}), Tensor({2, 3})};
        rng.fill_normal(batch.conds[0].data);
        rng.fill_normal(batch.conds[1].data);
        LossInfo info = loss_eps(spy, batch, sched, cfg, rng, false);
        for (const auto& conds : spy.seen)
            for (const auto& c : conds)
                CHECK(linf(c) == 0.0);
        CHECK(info.dropped[0][0]);
        CHECK(info.dropped[1][1]);
    }

    // independent channels: joint drop rate near p^2, not p
    {
        SpyModel spy;
        CfgConfig cfg;
        cfg.dropout_prob = 0.3;
        int both = 0, n = 4000;
        for (int k = 0; k < n; ++k) {
            DiffusionBatch batch;
            batch.z0 = Tensor({1, 2});
            batch.conds = {Tensor({1, 2}), Tensor({1, 2})};
            LossInfo info = loss_eps(spy, batch, sched, cfg, rng, false);
            if (info.dropped[0][0] && info.dropped[1][0])
                ++both;
        }
        double rate = (double)both / n;
        CHECK(rate == doctest::Approx(0.09).epsilon(0.35));
    }

    // joint mode: channels always drop together
    {
        SpyModel spy;
        CfgConfig cfg;
        cfg.dropout_prob = 0.5;
        cfg.joint_dropout = true;
        for (int k = 0; k < 500; ++k) {
            DiffusionBatch batch;
            batch.z0 = Tensor({1, 2});
            batch.conds = {Tensor({1, 2}), Tensor({1, 2})};
            LossInfo info = loss_eps(spy, batch, sched, cfg, rng, false);
            CHECK(info.dropped[0][0] == info.dropped[1][0]);
        }
    }
}

TEST_CASE("sampler: guidance 1 equals a hand-rolled conditional-only loop bitwise") {
    NoiseSchedule sched = NoiseSchedule::linear(32);

    // a fixed linear model so trajectories are non-trivial
    struct LinModel : EpsModel {
        Tensor forward(const Tensor& z_t, const std::vector<Tensor>& conds,
                       const std::vector<int>&) override {
            Tensor out = z_t;
            for (int64_t i = 0; i < out.numel(); ++i)
                out[i] = 0.4 * z_t[i] + 0.1 * conds[0][i];
            return out;
        }
    };
    LinModel model;
    std::vector<Tensor> conds = {Tensor({1, 4})};
    conds[0].fill(0.7);
    std::vector<Tensor> nulls = {Tensor({1, 4})};

    Rng r1(42);
    Tensor a = ddpm_sample(model, {1, 4}, conds, nulls, sched, 1.0, r1);

    // reference conditional-only ancestral loop
    Rng r2(42);
    Tensor z({1, 4});
    r2.fill_normal(z.data);
    for (int t = sched.T; t >= 1; --t) {
        Tensor eps = model.forward(z, conds, {t});
        double at = sched.alphas[(size_t)t];
        double abt = sched.alpha_bars[(size_t)t];
        double abp = sched.alpha_bars[(size_t)t - 1];
        double coef = sched.betas[(size_t)t] / std::sqrt(1.0 - abt);
        double inv = 1.0 / std::sqrt(at);
        double sigma = t > 1 ? std::sqrt(sched.betas[(size_t)t] * (1.0 - abp) / (1.0 - abt)) : 0.0;
        for (int64_t i = 0; i < z.numel(); ++i) {
            double mean = inv * (z[i] - coef * eps[i]);
            z[i] = mean + (sigma > 0 ? sigma * r2.normal() : 0.0);
        }
    }
    for (int64_t i = 0; i < a.numel(); ++i)
        CHECK(a[i] == z[i]);

    // fixed seed, two runs: identical output
    Rng r3(99), r4(99);
    Tensor s1 = ddpm_sample(model, {1, 4}, conds, nulls, sched, 2.5, r3);
    Tensor s2 = ddpm_sample(model, {1, 4}, conds, nulls, sched, 2.5, r4);
    CHECK(mse(s1, s2) == 0.0);
}

TEST_CASE("sampler recovers the data mean of a linear-Gaussian toy") {
    // data ~ N(mu, tau^2); the optimal eps-model is linear in z_t
    const double mu = 0.7, tau = 0.1;
    struct PosteriorModel : EpsModel {
        double mu, tau2;
        const NoiseSchedule* sched;
        Tensor forward(const Tensor& z_t, const std::vector<Tensor>&,
                       const std::vector<int>& t) override {
            double ab = sched->alpha_bars[(size_t)t[0]];
            Tensor out = z_t;
            for (int64_t i = 0; i < out.numel(); ++i) {
                double post_mean =
                    (std::sqrt(ab) * tau2 * z_t[i] + (1.0 - ab) * mu) / (ab * tau2 + 1.0 - ab);
                out[i] = (z_t[i] - std::sqrt(ab) * post_mean) / std::sqrt(1.0 - ab);
            }
            return out;
        }
    };
    NoiseSchedule sched = NoiseSchedule::linear(2);  // 2-step schedule
    PosteriorModel model;
    model.mu = mu;
    model.tau2 = tau * tau;
    model.sched = &sched;

    Rng rng(7);
    std::vector<Tensor> conds = {Tensor({1})}, nulls = {Tensor({1})};
    double acc = 0;
    const int K = 4000;
    for (int k = 0; k < K; ++k)
        acc += ddpm_sample(model, {1}, conds, nulls, sched, 1.0, rng)[0];
    CHECK(std::fabs(acc / K - mu) < 0.05);
}

TEST_CASE("loss_eps rejects non-finite model output") {
    struct NanModel : EpsModel {
        Tensor forward(const Tensor& z_t, const std::vector<Tensor>&,
                       const std::vector<int>&) override {
            Tensor out(z_t.shape);
            out[0] = std::nan("");
            return out;
        }
    };
    NoiseSchedule sched = NoiseSchedule::linear(8);
    Rng rng(1);
    NanModel model;
    DiffusionBatch batch;
    batch.z0 = Tensor({1, 4});
    CfgConfig cfg;
    CHECK_THROWS_AS(loss_eps(model, batch, sched, cfg, rng, false), TrainingError);
}
