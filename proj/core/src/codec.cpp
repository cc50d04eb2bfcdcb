#include "objswap/codec.hpp"

#include "objswap/bbox.hpp"
#include "objswap/checkpoint.hpp"
#include "objswap/errors.hpp"
#include "objswap/masking.hpp"
#include "objswap/ref_object.hpp"

#include <cmath>
#include <fstream>

using json = nlohmann::json;

namespace objswap {

json CodecConfig::to_json() const {
    return json{{"latent_channels", latent_channels}, {"c0", c0},       {"c1", c1},
                {"c2", c2},                           {"c3", c3},       {"dec_c0", dec_c0},
                {"steps", steps},                     {"lr", lr},       {"batch_size", batch_size},
                {"kl_weight", kl_weight},             {"seed", seed},   {"corrupt_prob", corrupt_prob}};
}

CodecConfig CodecConfig::from_json(const json& j) {
    CodecConfig c;
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.c0 = j.value("c0", c.c0);
    c.c1 = j.value("c1", c.c1);
    c.c2 = j.value("c2", c.c2);
    c.c3 = j.value("c3", c.c3);
    c.dec_c0 = j.value("dec_c0", c.dec_c0);
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
    c.seed = j.value("seed", c.seed);
    c.corrupt_prob = j.value("corrupt_prob", c.corrupt_prob);
    return c;
}

struct CodecModel::Impl {
    using Conv = nn::Conv2d;
    using GN = nn::GroupNorm;
    using Act = nn::SiLU;

    // encoder
    Conv e_in;
    GN e_gn0;
    Act e_a0;
    Conv e_d1;
    GN e_gn1;
    Act e_a1;
    Conv e_d2;
    GN e_gn2;
    Act e_a2;
    Conv e_d3;
    GN e_gn3;
    Act e_a3;
    Conv e_mid;
    Act e_am;
    Conv e_out;  // -> 2 * latent channels

    // decoder
    Conv d_in;
    GN d_gn0;
    Act d_a0;
    Conv d_mid;
    GN d_gnm;
    Act d_am;
    nn::Upsample2x d_u1;
    Conv d_c1;
    GN d_gn1;
    Act d_a1;
    nn::Upsample2x d_u2;
    Conv d_c2;
    GN d_gn2;
    Act d_a2;
    nn::Upsample2x d_u3;
    Conv d_c3;
    GN d_gn3;
    Act d_a3;
    Conv d_ref;
    Act d_ar;
    Conv d_out;

    Impl(const CodecConfig& c, Rng& rng)
        : e_in(3, c.c0, 3, 1, 1, rng), e_gn0(c.c0, 4),
          e_d1(c.c0, c.c1, 3, 2, 1, rng), e_gn1(c.c1, 4),
          e_d2(c.c1, c.c2, 3, 2, 1, rng), e_gn2(c.c2, 4),
          e_d3(c.c2, c.c3, 3, 2, 1, rng), e_gn3(c.c3, 4),
          e_mid(c.c3, c.c3, 3, 1, 1, rng),
          e_out(c.c3, 2 * c.latent_channels, 1, 1, 0, rng),
          d_in(c.latent_channels, c.c3, 1, 1, 0, rng), d_gn0(c.c3, 4),
          d_mid(c.c3, c.c3, 3, 1, 1, rng), d_gnm(c.c3, 4),
          d_c1(c.c3, c.c2, 3, 1, 1, rng), d_gn1(c.c2, 4),
          d_c2(c.c2, c.c1, 3, 1, 1, rng), d_gn2(c.c1, 4),
          d_c3(c.c1, c.dec_c0, 3, 1, 1, rng), d_gn3(c.dec_c0, 4),
          d_ref(c.dec_c0, c.dec_c0, 3, 1, 1, rng),
          d_out(c.dec_c0, 3, 3, 1, 1, rng) {}

    std::pair<Tensor, Tensor> encode(const Tensor& x, int latent_channels) {
        Tensor h = e_a0.forward(e_gn0.forward(e_in.forward(x)));
        h = e_a1.forward(e_gn1.forward(e_d1.forward(h)));
        h = e_a2.forward(e_gn2.forward(e_d2.forward(h)));
        h = e_a3.forward(e_gn3.forward(e_d3.forward(h)));
        h = e_am.forward(e_mid.forward(h));
        Tensor mulv = e_out.forward(h);
        int B = mulv.shape[0], hh = mulv.shape[2], ww = mulv.shape[3];
        Tensor mu({B, latent_channels, hh, ww}), lv({B, latent_channels, hh, ww});
        for (int b = 0; b < B; ++b)
            for (int ch = 0; ch < latent_channels; ++ch)
                for (int y = 0; y < hh; ++y)
                    for (int xx = 0; xx < ww; ++xx) {
                        mu.at(b, ch, y, xx) = mulv.at(b, ch, y, xx);
                        lv.at(b, ch, y, xx) = mulv.at(b, ch + latent_channels, y, xx);
                    }
        return {mu, lv};
    }

    void encode_backward(const Tensor& gmu, const Tensor& glv) {
        int B = gmu.shape[0], L = gmu.shape[1], hh = gmu.shape[2], ww = gmu.shape[3];
        Tensor g({B, 2 * L, hh, ww});
        for (int b = 0; b < B; ++b)
            for (int ch = 0; ch < L; ++ch)
                for (int y = 0; y < hh; ++y)
                    for (int xx = 0; xx < ww; ++xx) {
                        g.at(b, ch, y, xx) = gmu.at(b, ch, y, xx);
                        g.at(b, ch + L, y, xx) = glv.at(b, ch, y, xx);
                    }
        Tensor gh = e_out.backward(g);
        gh = e_mid.backward(e_am.backward(gh));
        gh = e_d3.backward(e_gn3.backward(e_a3.backward(gh)));
        gh = e_d2.backward(e_gn2.backward(e_a2.backward(gh)));
        gh = e_d1.backward(e_gn1.backward(e_a1.backward(gh)));
        (void)e_in.backward(e_gn0.backward(e_a0.backward(gh)));
    }

    Tensor decode(const Tensor& z) {
        Tensor h = d_a0.forward(d_gn0.forward(d_in.forward(z)));
        h = d_am.forward(d_gnm.forward(d_mid.forward(h)));
        h = d_a1.forward(d_gn1.forward(d_c1.forward(d_u1.forward(h))));
        h = d_a2.forward(d_gn2.forward(d_c2.forward(d_u2.forward(h))));
        h = d_a3.forward(d_gn3.forward(d_c3.forward(d_u3.forward(h))));
        h = d_ar.forward(d_ref.forward(h));
        return d_out.forward(h);
    }

    Tensor decode_backward(const Tensor& gy) {
        Tensor g = d_out.backward(gy);
        g = d_ref.backward(d_ar.backward(g));
        g = d_u3.backward(d_c3.backward(d_gn3.backward(d_a3.backward(g))));
        g = d_u2.backward(d_c2.backward(d_gn2.backward(d_a2.backward(g))));
        g = d_u1.backward(d_c1.backward(d_gn1.backward(d_a1.backward(g))));
        g = d_mid.backward(d_gnm.backward(d_am.backward(g)));
        return d_in.backward(d_gn0.backward(d_a0.backward(g)));
    }

    void collect(std::vector<nn::ParamRef>& out) {
        e_in.collect_params(out, "enc.in");
        e_gn0.collect_params(out, "enc.gn0");
        e_d1.collect_params(out, "enc.d1");
        e_gn1.collect_params(out, "enc.gn1");
        e_d2.collect_params(out, "enc.d2");
        e_gn2.collect_params(out, "enc.gn2");
        e_d3.collect_params(out, "enc.d3");
        e_gn3.collect_params(out, "enc.gn3");
        e_mid.collect_params(out, "enc.mid");
        e_out.collect_params(out, "enc.out");
        d_in.collect_params(out, "dec.in");
        d_gn0.collect_params(out, "dec.gn0");
        d_mid.collect_params(out, "dec.mid");
        d_gnm.collect_params(out, "dec.gnm");
        d_c1.collect_params(out, "dec.c1");
        d_gn1.collect_params(out, "dec.gn1");
        d_c2.collect_params(out, "dec.c2");
        d_gn2.collect_params(out, "dec.gn2");
        d_c3.collect_params(out, "dec.c3");
        d_gn3.collect_params(out, "dec.gn3");
        d_ref.collect_params(out, "dec.ref");
        d_out.collect_params(out, "dec.out");
    }
};

CodecModel::CodecModel(const CodecConfig& config, uint64_t init_seed) : config_(config) {
    Rng rng(init_seed, "codec_init");
    impl_ = std::make_shared<Impl>(config, rng);
}

static void check_dims(const Tensor& frame) {
    if (frame.ndim() != 3 || frame.shape[0] != 3)
        throw ValidationError("frame", "expected [3,H,W], got " + frame.shape_str());
    if (frame.shape[1] % 8 != 0 || frame.shape[2] % 8 != 0)
        throw ValidationError("frame", "H and W must be divisible by 8, got " + frame.shape_str());
}

Tensor CodecModel::encode(const Tensor& frame) {
    check_dims(frame);
    Tensor x = frame.reshaped({1, 3, frame.shape[1], frame.shape[2]});
    auto [mu, lv] = impl_->encode(x, config_.latent_channels);
    Tensor z({config_.latent_channels, mu.shape[2], mu.shape[3]});
    for (int64_t i = 0; i < z.numel(); ++i)
        z[i] = mu[i] * latent_scale;
    return z;
}

Tensor CodecModel::encode_batch(const Tensor& x) {
    auto [mu, lv] = impl_->encode(x, config_.latent_channels);
    for (int64_t i = 0; i < mu.numel(); ++i)
        mu[i] *= latent_scale;
    return mu;
}

Tensor CodecModel::decode(const Tensor& z) {
    Tensor zin = z.reshaped({1, z.shape[0], z.shape[1], z.shape[2]});
    for (auto& v : zin.data)
        v /= latent_scale;
    Tensor x = impl_->decode(zin);
    Tensor out({3, x.shape[2], x.shape[3]});
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::clamp(x[i], 0.0, 1.0);
    return out;
}

std::pair<Tensor, Tensor> CodecModel::encode_train(const Tensor& x) {
    return impl_->encode(x, config_.latent_channels);
}

Tensor CodecModel::decode_train(const Tensor& z) {
    return impl_->decode(z);
}

Tensor CodecModel::decoder_backward(const Tensor& gxhat) {
    return impl_->decode_backward(gxhat);
}

void CodecModel::encoder_backward(const Tensor& gmu, const Tensor& glogvar) {
    impl_->encode_backward(gmu, glogvar);
}

std::vector<nn::ParamRef> CodecModel::params() {
    std::vector<nn::ParamRef> out;
    impl_->collect(out);
    return out;
}

void save_codec(const CodecModel& model, const std::string& path) {
    auto params = const_cast<CodecModel&>(model).params();
    Tensor scale({1});
    scale[0] = model.latent_scale;
    save_checkpoint(path, "codec", model.config().to_json(), params, {{"latent_scale", scale}});
}

CodecModel load_codec(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path, "codec");
    CodecModel model(CodecConfig::from_json(ckpt.config));
    restore_params(ckpt, model.params());
    if (const Tensor* s = ckpt.find("latent_scale"))
        model.latent_scale = (*s)[0];
    return model;
}

// ---- training -----------------------------------------------------------------

namespace {

struct CodecPool {
    std::vector<Tensor> frames;              // train frames
    std::vector<BBox> boxes;                 // squarified per frame
    std::vector<const Tensor*> sprites;      // per frame, owned by clips
    std::vector<VideoClip> clips_storage;    // keeps sprites alive
    std::vector<Tensor> val_frames;
};

CodecPool load_pool(const std::string& dataset_dir) {
    DatasetIndex index = load_index(dataset_dir);
    CodecPool pool;
    for (const auto& e : index.clips) {
        VideoClip clip = load_clip(clip_dir_for(dataset_dir, e.id));
        if (e.split == "train") {
            pool.clips_storage.push_back(std::move(clip));
        } else {
            for (int i = 0; i < (int)clip.frames.size(); i += 3)
                pool.val_frames.push_back(clip.frames[(size_t)i]);
        }
    }
    for (const auto& clip : pool.clips_storage)
        for (int i = 0; i < clip.frame_count(); ++i) {
            pool.frames.push_back(clip.frames[(size_t)i]);
            BBox b = squarify(bbox_from_mask(clip.object_masks[(size_t)i]), clip.height(), clip.width());
            pool.boxes.push_back(b);
            pool.sprites.push_back(&clip.object_sprite);
        }
    if (pool.frames.empty())
        throw TrainingError("dataset has no train frames");
    if (pool.val_frames.empty())
        pool.val_frames.push_back(pool.frames[0]);
    return pool;
}

// conditioning-style corruptions: the diffusion stages feed the codec masked
// frames, dot-warped frames and collaged frames, so it must reconstruct them
Tensor corrupt_sample(const Tensor& frame, const BBox& box, const Tensor* sprite, Rng& rng) {
    double which = rng.uniform();
    Tensor masked = mask_frame(frame, box);
    if (which < 0.4) {
        return masked;
    } else if (which < 0.75) {
        int64_t n = (int64_t)(box.area() * rng.uniform(0.1, 1.0));
        for (int64_t k = 0; k < n; ++k) {
            int x = box.x0 + (int)rng.uniform_index((uint64_t)box.width());
            int y = box.y0 + (int)rng.uniform_index((uint64_t)box.height());
            int sx = (int)rng.uniform_index((uint64_t)frame.shape[2]);
            int sy = (int)rng.uniform_index((uint64_t)frame.shape[1]);
            for (int c = 0; c < 3; ++c)
                masked.at(c, y, x) = frame.at(c, sy, sx);
        }
        return masked;
    } else if (sprite != nullptr) {
        RefObjectImage obj;
        obj.rgba = *sprite;
        return collage(masked, box, obj, Resample::bilinear, rng.uniform(0.5, 0.9));
    }
    return masked;
}

double eval_psnr(CodecModel& model, const std::vector<Tensor>& frames) {
    double acc = 0;
    for (const auto& f : frames)
        acc += psnr(model.decode(model.encode(f)), f);
    return acc / (double)frames.size();
}

}  // namespace

CodecTrainStats train_codec(const std::string& dataset_dir, const CodecConfig& config,
                            const std::string& out_ckpt, const std::string& log_path,
                            CodecModel* out_model) {
    CodecPool pool = load_pool(dataset_dir);
    CodecModel model(config, config.seed);
    auto params = model.params();
    nn::Adam adam;
    adam.lr = config.lr;
    Rng rng(config.seed, "codec_train");

    std::ofstream log;
    if (!log_path.empty())
        log.open(log_path, std::ios::trunc);

    int B = config.batch_size;
    int H = pool.frames[0].shape[1], W = pool.frames[0].shape[2];
    int L = config.latent_channels;

    // fixed validation batch
    int vb = std::min<int>(8, (int)pool.val_frames.size());
    Tensor val_x({vb, 3, H, W});
    for (int b = 0; b < vb; ++b)
        std::copy(pool.val_frames[(size_t)b].data.begin(), pool.val_frames[(size_t)b].data.end(),
                  val_x.data.begin() + (size_t)b * 3 * H * W);

    auto eval_loss = [&](const Tensor& x) {
        auto [mu, lv] = model.encode_train(x);
        Tensor xhat = model.decode_train(mu);  // mean reconstruction for eval
        return mse(xhat, x);
    };

    CodecTrainStats stats;
    stats.step0_val_loss = eval_loss(val_x);

    for (int step = 0; step < config.steps; ++step) {
        Tensor x({B, 3, H, W});
        for (int b = 0; b < B; ++b) {
            size_t k = rng.uniform_index(pool.frames.size());
            Tensor sample = rng.uniform() < config.corrupt_prob
                                ? corrupt_sample(pool.frames[k], pool.boxes[k], pool.sprites[k], rng)
                                : pool.frames[k];
            std::copy(sample.data.begin(), sample.data.end(), x.data.begin() + (size_t)b * 3 * H * W);
        }

        nn::zero_grads(params);
        auto [mu, lv] = model.encode_train(x);
        Tensor eps = Tensor::zeros_like(mu);
        rng.fill_normal(eps.data);
        Tensor z = Tensor::zeros_like(mu);
        for (int64_t i = 0; i < z.numel(); ++i)
            z[i] = mu[i] + std::exp(0.5 * lv[i]) * eps[i];
        Tensor xhat = model.decode_train(z);

        double rec = mse(xhat, x);
        double kl = 0;
        for (int64_t i = 0; i < mu.numel(); ++i)
            kl += 0.5 * (mu[i] * mu[i] + std::exp(lv[i]) - 1.0 - lv[i]);
        kl /= (double)mu.numel();
        double loss = rec + config.kl_weight * kl;
        if (!std::isfinite(loss))
            throw TrainingError("codec loss diverged (non-finite) at step " + std::to_string(step));

        Tensor gxhat = Tensor::zeros_like(xhat);
        double rs = 2.0 / (double)xhat.numel();
        for (int64_t i = 0; i < xhat.numel(); ++i)
            gxhat[i] = rs * (xhat[i] - x[i]);
        Tensor gz = model.decoder_backward(gxhat);
        Tensor gmu = Tensor::zeros_like(mu), glv = Tensor::zeros_like(lv);
        double ks = config.kl_weight / (double)mu.numel();
        for (int64_t i = 0; i < mu.numel(); ++i) {
            gmu[i] = gz[i] + ks * mu[i];
            glv[i] = gz[i] * eps[i] * 0.5 * std::exp(0.5 * lv[i]) + ks * 0.5 * (std::exp(lv[i]) - 1.0);
        }
        model.encoder_backward(gmu, glv);
        adam.lr = step < config.steps * 7 / 10 ? config.lr : config.lr * 0.25;
        adam.step(params);

        if (log && (step % 25 == 0 || step + 1 == config.steps))
            log << "{\"step\":" << step << ",\"loss\":" << loss << ",\"lr\":" << adam.lr << "}\n";
    }
    stats.steps_run = config.steps;
    stats.final_val_loss = eval_loss(val_x);

    // latent scale: unit std over a sample of training latents
    {
        int nb = std::min<int>(16, (int)pool.frames.size());
        Tensor x({nb, 3, H, W});
        for (int b = 0; b < nb; ++b)
            std::copy(pool.frames[(size_t)b].data.begin(), pool.frames[(size_t)b].data.end(),
                      x.data.begin() + (size_t)b * 3 * H * W);
        auto [mu, lv] = model.encode_train(x);
        double mean = 0;
        for (int64_t i = 0; i < mu.numel(); ++i)
            mean += mu[i];
        mean /= (double)mu.numel();
        double var = 0;
        for (int64_t i = 0; i < mu.numel(); ++i)
            var += (mu[i] - mean) * (mu[i] - mean);
        var /= (double)mu.numel();
        model.latent_scale = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
        (void)L;
    }

    stats.heldout_psnr = eval_psnr(model, pool.val_frames);
    if (!out_ckpt.empty())
        save_codec(model, out_ckpt);
    if (out_model)
        *out_model = model;
    return stats;
}

}  // namespace objswap
