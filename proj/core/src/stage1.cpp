#include "objswap/stage1.hpp"

#include "objswap/checkpoint.hpp"
#include "objswap/errors.hpp"

#include <algorithm>
#include <fstream>

using json = nlohmann::json;

namespace objswap {

json Stage1Config::to_json() const {
    json j;
    j["model_res"] = model_res;
    j["base_channels"] = base_channels;
    j["obj_embed_dim"] = obj_embed_dim;
    j["obj_input_res"] = obj_input_res;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["steps"] = steps;
    j["cfg_dropout"] = cfg_dropout;
    j["ratio_min"] = ratio_min;
    j["ratio_max"] = ratio_max;
    j["allow_same_frame"] = allow_same_frame;
    j["pairs_per_frame"] = pairs_per_frame;
    j["timesteps"] = timesteps;
    j["schedule"] = schedule;
    j["seed"] = seed;
    return j;
}

Stage1Config Stage1Config::from_json(const json& j) { return from_json(j, Stage1Config{}); }

Stage1Config Stage1Config::from_json(const json& j, const Stage1Config& base) {
    Stage1Config c = base;
    c.model_res = j.value("model_res", c.model_res);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.obj_embed_dim = j.value("obj_embed_dim", c.obj_embed_dim);
    c.obj_input_res = j.value("obj_input_res", c.obj_input_res);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.cfg_dropout = j.value("cfg_dropout", c.cfg_dropout);
    c.ratio_min = j.value("ratio_min", c.ratio_min);
    c.ratio_max = j.value("ratio_max", c.ratio_max);
    c.allow_same_frame = j.value("allow_same_frame", c.allow_same_frame);
    c.pairs_per_frame = j.value("pairs_per_frame", c.pairs_per_frame);
    c.timesteps = j.value("timesteps", c.timesteps);
    c.schedule = j.value("schedule", c.schedule);
    c.seed = j.value("seed", c.seed);
    return c;
}

NoiseSchedule Stage1Config::make_schedule() const {
    return schedule == "cosine" ? NoiseSchedule::cosine(timesteps) : NoiseSchedule::linear(timesteps);
}

Stage1Example build_training_pair(const VideoClip& clip, int frame_index, Rng& rng,
                                  const Stage1Config& config, CodecModel& codec) {
    const Tensor& mask = clip.object_masks[(size_t)frame_index];
    BBox sbox = squarify(bbox_from_mask(mask), clip.height(), clip.width());

    double ratio = rng.uniform(config.ratio_min, config.ratio_max);
    auto [model_frame, ct] = crop_center(clip.frames[(size_t)frame_index], sbox, ratio,
                                         config.model_res, Resample::bilinear,
                                         config.ratio_min, config.ratio_max);
    BBox mbox = ct.box_in_model(sbox);
    Tensor masked = mask_frame(model_frame, mbox);

    int alt = pick_alternate_frame(clip, frame_index, rng, config.allow_same_frame);
    RefObjectImage obj = extract_object(clip.frames[(size_t)alt], clip.object_masks[(size_t)alt]);
    obj.provenance.source_clip_id = clip.id;
    obj.provenance.source_frame = alt;
    obj = fill_occlusion(obj, clip);
    obj = augment(obj, rng, config.augment);

    Tensor collaged = collage(masked, mbox, obj);

    Stage1Example ex;
    ex.z = codec.encode(model_frame);
    ex.z_m = codec.encode(collaged);
    ex.obj_img = prepare_object_input(obj, config.obj_input_res);
    ex.clip_id = clip.id;
    ex.frame_index = frame_index;
    return ex;
}

Stage1Model::Stage1Model(const Stage1Config& config_, uint64_t init_seed)
    : config(config_),
      unet(UNet2dConfig{8, 4, config_.base_channels, config_.obj_embed_dim, 128, 64}, init_seed),
      obj_encoder(config_.obj_input_res, config_.obj_embed_dim, /*l2=*/true, init_seed, "obj_enc"),
      schedule(config_.make_schedule()) {}

Tensor Stage1Model::encode_object(const RefObjectImage& obj) {
    Tensor x = prepare_object_input(obj, config.obj_input_res);
    Tensor batch = x.reshaped({1, 3, config.obj_input_res, config.obj_input_res});
    Tensor e = obj_encoder.forward(batch);
    return e.reshaped({config.obj_embed_dim});
}

Tensor Stage1Model::encode_object_batch(const Tensor& obj_imgs) {
    return obj_encoder.forward(obj_imgs);
}

std::vector<nn::ParamRef> Stage1Model::params() {
    auto out = unet.params();
    auto enc = obj_encoder.params();
    out.insert(out.end(), enc.begin(), enc.end());
    return out;
}

namespace {

// EpsModel over the stage-1 UNet: conds[0] concat latent, conds[1] embedding.
struct Stage1Denoiser : EpsModel {
    UNet2d* unet;
    Tensor grad_ctx;  // [B,1,D] after backward

    Tensor forward(const Tensor& z_t, const std::vector<Tensor>& conds,
                   const std::vector<int>& t) override {
        int B = z_t.shape[0];
        const Tensor& z_m = conds[0];
        Tensor x({B, 8, z_t.shape[2], z_t.shape[3]});
        int64_t row = z_t.numel() / B;
        for (int b = 0; b < B; ++b) {
            std::copy(z_t.ptr() + b * row, z_t.ptr() + (b + 1) * row, x.ptr() + (size_t)b * 2 * row);
            std::copy(z_m.ptr() + b * row, z_m.ptr() + (b + 1) * row,
                      x.ptr() + (size_t)b * 2 * row + row);
        }
        Tensor ctx = conds[1].reshaped({B, 1, conds[1].shape[1]});
        return unet->forward(x, ctx, t);
    }

    void backward(const Tensor& geps) override { (void)unet->backward(geps, grad_ctx); }
};

struct Stage1Dataset {
    std::vector<Stage1Example> train, val;
};

Stage1Dataset build_dataset(const std::string& dataset_dir, const Stage1Config& config,
                            CodecModel& codec) {
    DatasetIndex index = load_index(dataset_dir);
    Stage1Dataset ds;
    Rng rng(config.seed, "stage1_data");
    for (const auto& e : index.clips) {
        VideoClip clip = load_clip(clip_dir_for(dataset_dir, e.id));
        bool is_val = e.split == "eval";
        int per_frame = is_val ? 1 : config.pairs_per_frame;
        for (int i = 0; i < clip.frame_count(); ++i) {
            if (mask_area(clip.object_masks[(size_t)i]) == 0)
                continue;
            for (int k = 0; k < per_frame; ++k) {
                Stage1Example ex = build_training_pair(clip, i, rng, config, codec);
                (is_val ? ds.val : ds.train).push_back(std::move(ex));
            }
        }
    }
    if (ds.train.empty())
        throw TrainingError("no stage-1 training pairs could be built");
    if (ds.val.empty())
        ds.val.push_back(ds.train[0]);
    return ds;
}

DiffusionBatch gather_batch(const std::vector<Stage1Example>& pool, const std::vector<size_t>& ids,
                            Stage1Model& model, Tensor* obj_imgs_out) {
    int B = (int)ids.size();
    const auto& first = pool[ids[0]];
    int lc = first.z.shape[0], lh = first.z.shape[1], lw = first.z.shape[2];
    int r = first.obj_img.shape[1];
    DiffusionBatch batch;
    batch.z0 = Tensor({B, lc, lh, lw});
    Tensor z_m({B, lc, lh, lw});
    Tensor obj({B, 3, r, r});
    int64_t zrow = (int64_t)lc * lh * lw, orow = 3LL * r * r;
    for (int b = 0; b < B; ++b) {
        const auto& ex = pool[ids[(size_t)b]];
        std::copy(ex.z.data.begin(), ex.z.data.end(), batch.z0.data.begin() + b * zrow);
        std::copy(ex.z_m.data.begin(), ex.z_m.data.end(), z_m.data.begin() + b * zrow);
        std::copy(ex.obj_img.data.begin(), ex.obj_img.data.end(), obj.data.begin() + b * orow);
    }
    Tensor emb = model.encode_object_batch(obj);
    batch.conds = {std::move(z_m), std::move(emb)};
    if (obj_imgs_out)
        *obj_imgs_out = std::move(obj);
    return batch;
}

}  // namespace

Stage1TrainStats train_stage1(const std::string& dataset_dir, CodecModel& codec,
                              const Stage1Config& config, const std::string& out_ckpt,
                              const std::string& log_path, Stage1Model* out_model) {
    Stage1Dataset ds = build_dataset(dataset_dir, config, codec);
    Stage1Model model(config, config.seed);
    auto params = model.params();
    nn::Adam adam;
    adam.lr = config.lr;
    Rng rng(config.seed, "stage1_train");

    Stage1Denoiser denoiser;
    denoiser.unet = &model.unet;
    CfgConfig cfg;
    cfg.dropout_prob = config.cfg_dropout;

    std::ofstream log;
    if (!log_path.empty())
        log.open(log_path, std::ios::trunc);

    // fixed validation batch, fixed eval seed
    std::vector<size_t> val_ids;
    for (size_t i = 0; i < std::min<size_t>(ds.val.size(), 16); ++i)
        val_ids.push_back(i);
    auto val_loss = [&]() {
        Rng vr(config.seed, "stage1_val");
        DiffusionBatch vb = gather_batch(ds.val, val_ids, model, nullptr);
        CfgConfig nocfg;
        nocfg.dropout_prob = 0.0;
        return loss_eps(denoiser, vb, model.schedule, nocfg, vr, false).loss;
    };

    Stage1TrainStats stats;
    stats.step0_val_loss = val_loss();

    int B = std::min<int>(config.batch_size, (int)ds.train.size());
    for (int step = 0; step < config.steps; ++step) {
        std::vector<size_t> ids((size_t)B);
        for (auto& id : ids)
            id = rng.uniform_index(ds.train.size());
        Tensor obj_imgs;
        DiffusionBatch batch = gather_batch(ds.train, ids, model, &obj_imgs);

        nn::zero_grads(params);
        LossInfo info = loss_eps(denoiser, batch, model.schedule, cfg, rng, true);
        // route embedding grads into the object encoder, skipping dropped rows
        Tensor gctx = denoiser.grad_ctx.reshaped({B, config.obj_embed_dim});
        for (int b = 0; b < B; ++b)
            if (info.dropped[1][(size_t)b])
                for (int d = 0; d < config.obj_embed_dim; ++d)
                    gctx.at(b, d) = 0.0;
        (void)model.obj_encoder.backward(gctx);
        adam.step(params);

        stats.dropout_draws += 2 * B;
        for (int ch = 0; ch < 2; ++ch)
            for (int b = 0; b < B; ++b)
                if (info.dropped[(size_t)ch][(size_t)b])
                    ++stats.dropout_events;

        if (log && (step % 25 == 0 || step + 1 == config.steps))
            log << "{\"step\":" << step << ",\"loss\":" << info.loss << ",\"lr\":" << adam.lr << "}\n";
    }
    stats.steps_run = config.steps;
    stats.final_val_loss = val_loss();

    if (!out_ckpt.empty())
        save_stage1(model, out_ckpt);
    if (out_model)
        *out_model = std::move(model);
    return stats;
}

void save_stage1(Stage1Model& model, const std::string& path) {
    save_checkpoint(path, "stage1", model.config.to_json(), model.params());
}

Stage1Model load_stage1(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path, "stage1");
    Stage1Model model(Stage1Config::from_json(ckpt.config), 0);
    restore_params(ckpt, model.params());
    return model;
}

EditFrameResult edit_frame(const Tensor& frame, const BBox& box, const RefObjectImage& ref,
                           Stage1Model& model, CodecModel& codec, const EditFrameOptions& opts) {
    int H = image_height(frame), W = image_width(frame);
    BBox sbox = squarify(box, H, W);
    auto [model_frame, ct] = crop_center(frame, sbox, opts.ratio, model.config.model_res,
                                         opts.mode, model.config.ratio_min, model.config.ratio_max);
    BBox mbox = ct.box_in_model(sbox);
    Tensor masked = mask_frame(model_frame, mbox);
    Tensor collaged = collage(masked, mbox, ref, opts.mode);

    Tensor z_m = codec.encode(collaged);
    Tensor emb = model.encode_object(ref);

    int lc = z_m.shape[0], lh = z_m.shape[1], lw = z_m.shape[2];
    Stage1Denoiser denoiser;
    denoiser.unet = &model.unet;
    std::vector<Tensor> conds = {z_m.reshaped({1, lc, lh, lw}),
                                 emb.reshaped({1, model.config.obj_embed_dim})};
    std::vector<Tensor> nulls = {Tensor({1, lc, lh, lw}), Tensor({1, model.config.obj_embed_dim})};
    Rng rng(opts.seed, "stage1_sample");
    Tensor z0 = ddpm_sample(denoiser, {1, lc, lh, lw}, conds, nulls, model.schedule,
                            opts.guidance_scale, rng);
    Tensor edited_model = codec.decode(z0.reshaped({lc, lh, lw}));

    EditFrameResult res;
    res.frame = paste_back(frame, edited_model, sbox, ct);
    res.box = sbox;
    res.model_frame = std::move(edited_model);
    return res;
}

}  // namespace objswap
