#include "objswap/stage2.hpp"

#include "objswap/checkpoint.hpp"
#include "objswap/errors.hpp"

#include <algorithm>
#include <fstream>

using json = nlohmann::json;

namespace objswap {

json Stage2Config::to_json() const {
    json j;
    j["num_frames"] = num_frames;
    j["model_res"] = model_res;
    j["base_channels"] = base_channels;
    j["ctx_embed_dim"] = ctx_embed_dim;
    j["ctx_input_res"] = ctx_input_res;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["steps"] = steps;
    j["cfg_dropout"] = cfg_dropout;
    j["flow_backend"] = flow_backend;
    j["variants_per_clip"] = variants_per_clip;
    j["temporal_enabled"] = temporal_enabled;
    j["train_temporal_only"] = train_temporal_only;
    j["box_mode"] = box_mode;
    j["timesteps"] = timesteps;
    j["schedule"] = schedule;
    j["seed"] = seed;
    return j;
}

Stage2Config Stage2Config::from_json(const json& j) { return from_json(j, Stage2Config{}); }

Stage2Config Stage2Config::from_json(const json& j, const Stage2Config& base) {
    Stage2Config c = base;
    c.num_frames = j.value("num_frames", c.num_frames);
    c.model_res = j.value("model_res", c.model_res);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.ctx_embed_dim = j.value("ctx_embed_dim", c.ctx_embed_dim);
    c.ctx_input_res = j.value("ctx_input_res", c.ctx_input_res);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.cfg_dropout = j.value("cfg_dropout", c.cfg_dropout);
    c.flow_backend = j.value("flow_backend", c.flow_backend);
    c.variants_per_clip = j.value("variants_per_clip", c.variants_per_clip);
    c.temporal_enabled = j.value("temporal_enabled", c.temporal_enabled);
    c.train_temporal_only = j.value("train_temporal_only", c.train_temporal_only);
    c.box_mode = j.value("box_mode", c.box_mode);
    c.timesteps = j.value("timesteps", c.timesteps);
    c.schedule = j.value("schedule", c.schedule);
    c.seed = j.value("seed", c.seed);
    return c;
}

NoiseSchedule Stage2Config::make_schedule() const {
    return schedule == "cosine" ? NoiseSchedule::cosine(timesteps) : NoiseSchedule::linear(timesteps);
}

SequenceBoxMode Stage2Config::sequence_box_mode() const {
    return box_mode == "union" ? SequenceBoxMode::union_box : SequenceBoxMode::largest_area;
}

namespace {

Tensor encode_frames(const std::vector<Tensor>& frames, CodecModel& codec) {
    int n = (int)frames.size();
    Tensor z0 = codec.encode(frames[0]);
    Tensor z({n, z0.shape[0], z0.shape[1], z0.shape[2]});
    std::copy(z0.data.begin(), z0.data.end(), z.data.begin());
    for (int i = 1; i < n; ++i) {
        Tensor zi = codec.encode(frames[(size_t)i]);
        std::copy(zi.data.begin(), zi.data.end(), z.data.begin() + (size_t)i * zi.numel());
    }
    return z;
}

}  // namespace

std::pair<int, double> draw_anchor_and_sparsity(Rng& rng, int num_frames) {
    int c = (int)rng.uniform_index((uint64_t)num_frames);
    double r = rng.uniform(0.0, 100.0);
    return {c, r};
}

Stage2Example build_training_clip(const VideoClip& clip, Rng& rng, const Stage2Config& config,
                                  CodecModel& codec, const FlowProvider* flows_in) {
    if (clip.frame_count() != config.num_frames)
        throw ValidationError("clip", "clip length " + std::to_string(clip.frame_count()) +
                                          " != configured num_frames " +
                                          std::to_string(config.num_frames));
    MaskedSequence ms = mask_sequence(clip.frames, clip.object_masks, config.sequence_box_mode());
    auto [c, r] = draw_anchor_and_sparsity(rng, config.num_frames);

    FlowProvider local;
    const FlowProvider* flows = flows_in;
    if (!flows) {
        local = make_flow_provider(clip, flow_backend_from_name(config.flow_backend));
        flows = &local;
    }
    auto origins = sample_points(ms.box, SparsityLevel{r}, rng);
    TrackedPoints tp = track_points(origins, *flows, c, config.num_frames, clip.frames[(size_t)c]);
    WarpedSequence ws = warp_sequence(ms, clip.frames[(size_t)c], c, tp);

    Stage2Example ex;
    ex.z = encode_frames(clip.frames, codec);
    ex.z_w = encode_frames(ws.frames, codec);
    ex.ctx_img = prepare_context_input(clip.frames[(size_t)c], config.ctx_input_res);
    ex.anchor_index = c;
    ex.r = r;
    ex.clip_id = clip.id;
    return ex;
}

Stage2Model::Stage2Model(const Stage2Config& config_, uint64_t init_seed)
    : config(config_),
      unet(UNet3dConfig{8, 4, config_.base_channels, config_.ctx_embed_dim, 128, 64,
                        config_.num_frames, config_.temporal_enabled},
           init_seed),
      ctx_encoder(config_.ctx_input_res, config_.ctx_embed_dim, /*l2=*/false, init_seed, "ctx_enc"),
      schedule(config_.make_schedule()) {}

Tensor Stage2Model::encode_context(const Tensor& frame) {
    Tensor x = prepare_context_input(frame, config.ctx_input_res);
    Tensor e = ctx_encoder.forward(x.reshaped({1, 3, config.ctx_input_res, config.ctx_input_res}));
    return e.reshaped({config.ctx_embed_dim});
}

std::vector<nn::ParamRef> Stage2Model::params() {
    auto out = unet.params();
    auto enc = ctx_encoder.params();
    out.insert(out.end(), enc.begin(), enc.end());
    return out;
}

namespace {

// conds[0]: warped latents [B,N,4,h,w]; conds[1]: context embedding [B,D]
struct VideoDenoiser : EpsModel {
    UNet3d* unet;
    Tensor grad_ctx;  // [B,1,D]

    Tensor forward(const Tensor& z_t, const std::vector<Tensor>& conds,
                   const std::vector<int>& t) override {
        int B = z_t.shape[0], N = z_t.shape[1], C = z_t.shape[2], h = z_t.shape[3], w = z_t.shape[4];
        const Tensor& z_w = conds[0];
        Tensor x({B, N, 2 * C, h, w});
        int64_t plane = (int64_t)C * h * w;
        for (int b = 0; b < B; ++b)
            for (int n = 0; n < N; ++n) {
                int64_t src = ((int64_t)b * N + n) * plane;
                int64_t dst = ((int64_t)b * N + n) * 2 * plane;
                std::copy(z_t.ptr() + src, z_t.ptr() + src + plane, x.ptr() + dst);
                std::copy(z_w.ptr() + src, z_w.ptr() + src + plane, x.ptr() + dst + plane);
            }
        Tensor ctx = conds[1].reshaped({B, 1, conds[1].shape[1]});
        return unet->forward(x, ctx, t);
    }

    void backward(const Tensor& geps) override { (void)unet->backward(geps, grad_ctx); }
};

struct Stage2Dataset {
    std::vector<Stage2Example> train, val;
};

Stage2Dataset build_dataset(const std::string& dataset_dir, const Stage2Config& config,
                            CodecModel& codec, std::vector<double>* r_seen) {
    DatasetIndex index = load_index(dataset_dir);
    Stage2Dataset ds;
    Rng rng(config.seed, "stage2_data");
    for (const auto& e : index.clips) {
        VideoClip clip = load_clip(clip_dir_for(dataset_dir, e.id));
        FlowProvider flows = make_flow_provider(clip, flow_backend_from_name(config.flow_backend));
        bool is_val = e.split == "eval";
        int variants = is_val ? 1 : config.variants_per_clip;
        for (int k = 0; k < variants; ++k) {
            Stage2Example ex = build_training_clip(clip, rng, config, codec, &flows);
            if (r_seen && !is_val)
                r_seen->push_back(ex.r);
            (is_val ? ds.val : ds.train).push_back(std::move(ex));
        }
    }
    if (ds.train.empty())
        throw TrainingError("no stage-2 training clips could be built");
    if (ds.val.empty())
        ds.val.push_back(ds.train[0]);
    return ds;
}

DiffusionBatch gather_batch(const std::vector<Stage2Example>& pool, const std::vector<size_t>& ids,
                            ConvEmbedder& ctx_enc, Tensor* ctx_imgs_out) {
    int B = (int)ids.size();
    const auto& f = pool[ids[0]];
    int N = f.z.shape[0], C = f.z.shape[1], h = f.z.shape[2], w = f.z.shape[3];
    int R = f.ctx_img.shape[1];
    DiffusionBatch batch;
    batch.z0 = Tensor({B, N, C, h, w});
    Tensor z_w({B, N, C, h, w});
    Tensor ctx_imgs({B, 3, R, R});
    int64_t zrow = (int64_t)N * C * h * w, crow = 3LL * R * R;
    for (int b = 0; b < B; ++b) {
        const auto& ex = pool[ids[(size_t)b]];
        std::copy(ex.z.data.begin(), ex.z.data.end(), batch.z0.data.begin() + b * zrow);
        std::copy(ex.z_w.data.begin(), ex.z_w.data.end(), z_w.data.begin() + b * zrow);
        std::copy(ex.ctx_img.data.begin(), ex.ctx_img.data.end(), ctx_imgs.data.begin() + b * crow);
    }
    Tensor emb = ctx_enc.forward(ctx_imgs);
    batch.conds = {std::move(z_w), std::move(emb)};
    if (ctx_imgs_out)
        *ctx_imgs_out = std::move(ctx_imgs);
    return batch;
}

}  // namespace

Stage2TrainStats train_stage2(const std::string& dataset_dir, CodecModel& codec,
                              const Stage2Config& config, const std::string& out_ckpt,
                              const std::string& log_path, Stage2Model* out_model) {
    Stage2TrainStats stats;
    Stage2Dataset ds = build_dataset(dataset_dir, config, codec, &stats.r_values_seen);
    Stage2Model model(config, config.seed);
    auto all_params = model.params();
    std::vector<nn::ParamRef> trainable = all_params;
    if (config.train_temporal_only)
        trainable = model.unet.temporal_params();
    nn::Adam adam;
    adam.lr = config.lr;
    Rng rng(config.seed, "stage2_train");

    VideoDenoiser denoiser;
    denoiser.unet = &model.unet;
    CfgConfig cfg;
    cfg.dropout_prob = config.cfg_dropout;

    std::ofstream log;
    if (!log_path.empty())
        log.open(log_path, std::ios::trunc);

    std::vector<size_t> val_ids;
    for (size_t i = 0; i < std::min<size_t>(ds.val.size(), 4); ++i)
        val_ids.push_back(i);
    auto val_loss = [&]() {
        Rng vr(config.seed, "stage2_val");
        DiffusionBatch vb = gather_batch(ds.val, val_ids, model.ctx_encoder, nullptr);
        CfgConfig nocfg;
        nocfg.dropout_prob = 0.0;
        return loss_eps(denoiser, vb, model.schedule, nocfg, vr, false).loss;
    };
    stats.step0_val_loss = val_loss();

    int B = std::min<int>(config.batch_size, (int)ds.train.size());
    for (int step = 0; step < config.steps; ++step) {
        std::vector<size_t> ids((size_t)B);
        for (auto& id : ids)
            id = rng.uniform_index(ds.train.size());
        DiffusionBatch batch = gather_batch(ds.train, ids, model.ctx_encoder, nullptr);

        nn::zero_grads(all_params);
        LossInfo info = loss_eps(denoiser, batch, model.schedule, cfg, rng, true);
        Tensor gctx = denoiser.grad_ctx.reshaped({B, config.ctx_embed_dim});
        for (int b = 0; b < B; ++b)
            if (info.dropped[1][(size_t)b])
                for (int d = 0; d < config.ctx_embed_dim; ++d)
                    gctx.at(b, d) = 0.0;
        (void)model.ctx_encoder.backward(gctx);
        adam.step(trainable);

        if (log && (step % 25 == 0 || step + 1 == config.steps))
            log << "{\"step\":" << step << ",\"loss\":" << info.loss << ",\"lr\":" << adam.lr << "}\n";
    }
    stats.steps_run = config.steps;
    stats.final_val_loss = val_loss();

    if (!out_ckpt.empty())
        save_stage2(model, out_ckpt);
    if (out_model)
        *out_model = std::move(model);
    return stats;
}

void save_stage2(Stage2Model& model, const std::string& path) {
    save_checkpoint(path, "stage2", model.config.to_json(), model.params());
}

Stage2Model load_stage2(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path, "stage2");
    Stage2Model model(Stage2Config::from_json(ckpt.config), 0);
    restore_params(ckpt, model.params());
    return model;
}

GenerateResult generate_video(const std::vector<Tensor>& source_frames,
                              const MaskedSequence& masked, const Tensor& edited_anchor,
                              int anchor_index, double r, Stage2Model& model, CodecModel& codec,
                              const FlowProvider& flows, const GenerateOptions& opts) {
    int N = (int)masked.frames.size();
    if (N != model.config.num_frames)
        throw ValidationError("frames", "sequence length != model num_frames");
    if (!edited_anchor.same_shape(masked.frames[0]))
        throw ValidationError("edited_anchor", "size mismatch with masked frames");

    Rng rng(opts.seed, "stage2_points");
    auto origins = sample_points(masked.box, SparsityLevel{r}, rng);
    TrackedPoints tp = track_points(origins, flows, anchor_index, N, edited_anchor);
    WarpedSequence ws = warp_sequence(masked, edited_anchor, anchor_index, tp);

    Tensor z_w = Tensor();
    {
        Tensor z0 = codec.encode(ws.frames[0]);
        z_w = Tensor({N, z0.shape[0], z0.shape[1], z0.shape[2]});
        std::copy(z0.data.begin(), z0.data.end(), z_w.data.begin());
        for (int i = 1; i < N; ++i) {
            Tensor zi = codec.encode(ws.frames[(size_t)i]);
            std::copy(zi.data.begin(), zi.data.end(), z_w.data.begin() + (size_t)i * zi.numel());
        }
    }
    Tensor d_c = model.encode_context(edited_anchor);

    int C = z_w.shape[1], h = z_w.shape[2], w = z_w.shape[3];
    VideoDenoiser denoiser;
    denoiser.unet = &model.unet;
    std::vector<Tensor> conds = {z_w.reshaped({1, N, C, h, w}),
                                 d_c.reshaped({1, model.config.ctx_embed_dim})};
    std::vector<Tensor> nulls = {Tensor({1, N, C, h, w}), Tensor({1, model.config.ctx_embed_dim})};
    Rng srng(opts.seed, "stage2_sample");
    Tensor z0 = ddpm_sample(denoiser, {1, N, C, h, w}, conds, nulls, model.schedule,
                            opts.guidance_scale, srng);

    GenerateResult res;
    res.warped = std::move(ws);
    res.points_count = (int)origins.size();
    for (int i = 0; i < N; ++i) {
        Tensor zi({C, h, w});
        std::copy(z0.data.begin() + (size_t)i * zi.numel(),
                  z0.data.begin() + (size_t)(i + 1) * zi.numel(), zi.data.begin());
        Tensor decoded = codec.decode(zi);
        res.model_frames.push_back(decoded);
        // repaint only the box region; everything else comes from the source
        Tensor out = source_frames[(size_t)i];
        for (int ch = 0; ch < 3; ++ch)
            for (int y = masked.box.y0; y < masked.box.y1; ++y)
                for (int x = masked.box.x0; x < masked.box.x1; ++x)
                    out.at(ch, y, x) = decoded.at(ch, y, x);
        res.frames.push_back(std::move(out));
    }
    return res;
}

// ---- one-stage variant ---------------------------------------------------------

json OneStageConfig::to_json() const {
    json j;
    j["num_frames"] = num_frames;
    j["model_res"] = model_res;
    j["base_channels"] = base_channels;
    j["obj_embed_dim"] = obj_embed_dim;
    j["obj_input_res"] = obj_input_res;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["steps"] = steps;
    j["cfg_dropout"] = cfg_dropout;
    j["variants_per_clip"] = variants_per_clip;
    j["box_mode"] = box_mode;
    j["timesteps"] = timesteps;
    j["schedule"] = schedule;
    j["seed"] = seed;
    return j;
}

OneStageConfig OneStageConfig::from_json(const json& j) { return from_json(j, OneStageConfig{}); }

OneStageConfig OneStageConfig::from_json(const json& j, const OneStageConfig& base) {
    OneStageConfig c = base;
    c.num_frames = j.value("num_frames", c.num_frames);
    c.model_res = j.value("model_res", c.model_res);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.obj_embed_dim = j.value("obj_embed_dim", c.obj_embed_dim);
    c.obj_input_res = j.value("obj_input_res", c.obj_input_res);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.cfg_dropout = j.value("cfg_dropout", c.cfg_dropout);
    c.variants_per_clip = j.value("variants_per_clip", c.variants_per_clip);
    c.box_mode = j.value("box_mode", c.box_mode);
    c.timesteps = j.value("timesteps", c.timesteps);
    c.schedule = j.value("schedule", c.schedule);
    c.seed = j.value("seed", c.seed);
    return c;
}

NoiseSchedule OneStageConfig::make_schedule() const {
    return schedule == "cosine" ? NoiseSchedule::cosine(timesteps) : NoiseSchedule::linear(timesteps);
}

OneStageModel::OneStageModel(const OneStageConfig& config_, uint64_t init_seed)
    : config(config_),
      unet(UNet3dConfig{8, 4, config_.base_channels, config_.obj_embed_dim, 128, 64,
                        config_.num_frames, true},
           init_seed ^ 0x05),
      obj_encoder(config_.obj_input_res, config_.obj_embed_dim, /*l2=*/true, init_seed ^ 0x05,
                  "os_obj_enc"),
      schedule(config_.make_schedule()) {}

std::vector<nn::ParamRef> OneStageModel::params() {
    auto out = unet.params();
    auto enc = obj_encoder.params();
    out.insert(out.end(), enc.begin(), enc.end());
    return out;
}

Stage2TrainStats train_one_stage(const std::string& dataset_dir, CodecModel& codec,
                                 const OneStageConfig& config, const std::string& out_ckpt,
                                 const std::string& log_path, OneStageModel* out_model) {
    DatasetIndex index = load_index(dataset_dir);
    struct Example {
        Tensor z, z_m, obj_img;
    };
    std::vector<Example> train, val;
    Rng rng(config.seed, "onestage_data");
    SequenceBoxMode mode =
        config.box_mode == "union" ? SequenceBoxMode::union_box : SequenceBoxMode::largest_area;
    for (const auto& e : index.clips) {
        VideoClip clip = load_clip(clip_dir_for(dataset_dir, e.id));
        MaskedSequence ms = mask_sequence(clip.frames, clip.object_masks, mode);
        Tensor z = encode_frames(clip.frames, codec);
        Tensor z_m = encode_frames(ms.frames, codec);
        bool is_val = e.split == "eval";
        int variants = is_val ? 1 : config.variants_per_clip;
        for (int k = 0; k < variants; ++k) {
            // reference object from a random frame, filled and augmented
            std::vector<int> cands;
            for (int i = 0; i < clip.frame_count(); ++i)
                if (mask_area(clip.object_masks[(size_t)i]) > 0)
                    cands.push_back(i);
            if (cands.empty())
                continue;
            int fi = cands[rng.uniform_index(cands.size())];
            RefObjectImage obj = extract_object(clip.frames[(size_t)fi], clip.object_masks[(size_t)fi]);
            obj = fill_occlusion(obj, clip);
            obj = augment(obj, rng, config.augment);
            Example ex{z, z_m, prepare_object_input(obj, config.obj_input_res)};
            (is_val ? val : train).push_back(std::move(ex));
        }
    }
    if (train.empty())
        throw TrainingError("no one-stage training clips could be built");
    if (val.empty())
        val.push_back(train[0]);

    OneStageModel model(config, config.seed);
    auto params = model.params();
    nn::Adam adam;
    adam.lr = config.lr;

    VideoDenoiser denoiser;
    denoiser.unet = &model.unet;
    CfgConfig cfg;
    cfg.dropout_prob = config.cfg_dropout;

    std::ofstream log;
    if (!log_path.empty())
        log.open(log_path, std::ios::trunc);

    auto gather = [&](const std::vector<Example>& pool, const std::vector<size_t>& ids) {
        int B = (int)ids.size();
        const auto& f = pool[ids[0]];
        int N = f.z.shape[0], C = f.z.shape[1], h = f.z.shape[2], w = f.z.shape[3];
        int R = f.obj_img.shape[1];
        DiffusionBatch batch;
        batch.z0 = Tensor({B, N, C, h, w});
        Tensor z_m({B, N, C, h, w});
        Tensor obj({B, 3, R, R});
        int64_t zrow = (int64_t)N * C * h * w, orow = 3LL * R * R;
        for (int b = 0; b < B; ++b) {
            const auto& ex = pool[ids[(size_t)b]];
            std::copy(ex.z.data.begin(), ex.z.data.end(), batch.z0.data.begin() + b * zrow);
            std::copy(ex.z_m.data.begin(), ex.z_m.data.end(), z_m.data.begin() + b * zrow);
            std::copy(ex.obj_img.data.begin(), ex.obj_img.data.end(), obj.data.begin() + b * orow);
        }
        Tensor emb = model.obj_encoder.forward(obj);
        batch.conds = {std::move(z_m), std::move(emb)};
        return batch;
    };

    Stage2TrainStats stats;
    std::vector<size_t> val_ids;
    for (size_t i = 0; i < std::min<size_t>(val.size(), 4); ++i)
        val_ids.push_back(i);
    auto val_loss = [&]() {
        Rng vr(config.seed, "onestage_val");
        DiffusionBatch vb = gather(val, val_ids);
        CfgConfig nocfg;
        nocfg.dropout_prob = 0.0;
        return loss_eps(denoiser, vb, model.schedule, nocfg, vr, false).loss;
    };
    stats.step0_val_loss = val_loss();

    int B = std::min<int>(config.batch_size, (int)train.size());
    Rng trng(config.seed, "onestage_train");
    for (int step = 0; step < config.steps; ++step) {
        std::vector<size_t> ids((size_t)B);
        for (auto& id : ids)
            id = trng.uniform_index(train.size());
        DiffusionBatch batch = gather(train, ids);
        nn::zero_grads(params);
        LossInfo info = loss_eps(denoiser, batch, model.schedule, cfg, trng, true);
        Tensor gctx = denoiser.grad_ctx.reshaped({B, config.obj_embed_dim});
        for (int b = 0; b < B; ++b)
            if (info.dropped[1][(size_t)b])
                for (int d = 0; d < config.obj_embed_dim; ++d)
                    gctx.at(b, d) = 0.0;
        (void)model.obj_encoder.backward(gctx);
        adam.step(params);
        if (log && (step % 25 == 0 || step + 1 == config.steps))
            log << "{\"step\":" << step << ",\"loss\":" << info.loss << ",\"lr\":" << adam.lr << "}\n";
    }
    stats.steps_run = config.steps;
    stats.final_val_loss = val_loss();

    if (!out_ckpt.empty())
        save_one_stage(model, out_ckpt);
    if (out_model)
        *out_model = std::move(model);
    return stats;
}

void save_one_stage(OneStageModel& model, const std::string& path) {
    save_checkpoint(path, "one_stage", model.config.to_json(), model.params());
}

OneStageModel load_one_stage(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path, "one_stage");
    OneStageModel model(OneStageConfig::from_json(ckpt.config), 0);
    restore_params(ckpt, model.params());
    return model;
}

GenerateResult generate_one_stage(const std::vector<Tensor>& source_frames,
                                  const MaskedSequence& masked, const RefObjectImage& ref,
                                  OneStageModel& model, CodecModel& codec,
                                  const GenerateOptions& opts) {
    int N = (int)masked.frames.size();
    Tensor z_m = encode_frames(masked.frames, codec);
    Tensor obj_in = prepare_object_input(ref, model.config.obj_input_res);
    Tensor emb = model.obj_encoder.forward(
        obj_in.reshaped({1, 3, model.config.obj_input_res, model.config.obj_input_res}));

    int C = z_m.shape[1], h = z_m.shape[2], w = z_m.shape[3];
    VideoDenoiser denoiser;
    denoiser.unet = &model.unet;
    std::vector<Tensor> conds = {z_m.reshaped({1, N, C, h, w}), emb};
    std::vector<Tensor> nulls = {Tensor({1, N, C, h, w}), Tensor({1, model.config.obj_embed_dim})};
    Rng srng(opts.seed, "onestage_sample");
    Tensor z0 = ddpm_sample(denoiser, {1, N, C, h, w}, conds, nulls, model.schedule,
                            opts.guidance_scale, srng);

    GenerateResult res;
    res.points_count = 0;
    for (int i = 0; i < N; ++i) {
        Tensor zi({C, h, w});
        std::copy(z0.data.begin() + (size_t)i * zi.numel(),
                  z0.data.begin() + (size_t)(i + 1) * zi.numel(), zi.data.begin());
        Tensor decoded = codec.decode(zi);
        res.model_frames.push_back(decoded);
        Tensor out = source_frames[(size_t)i];
        for (int ch = 0; ch < 3; ++ch)
            for (int y = masked.box.y0; y < masked.box.y1; ++y)
                for (int x = masked.box.x0; x < masked.box.x1; ++x)
                    out.at(ch, y, x) = decoded.at(ch, y, x);
        res.frames.push_back(std::move(out));
    }
    return res;
}

}  // namespace objswap
