#include "objswap/config.hpp"

#include "objswap/errors.hpp"

#include <fstream>
#include <set>

using json = nlohmann::json;

namespace objswap {

namespace {

// provenance of each default: "paper" = value taken from the published
// training recipe, "desk" = desk-scale choice made by this artifact
const std::vector<std::pair<std::string, std::string>> kProvenance = {
    {"corpus.num_clips", "desk"},
    {"corpus.frame_size", "desk"},
    {"corpus.num_frames", "desk"},
    {"corpus.eval_fraction", "desk"},
    {"codec.latent_channels", "paper"},  // 4 x H/8 x W/8 latents
    {"codec.steps", "desk"},
    {"codec.lr", "desk"},
    {"codec.batch_size", "desk"},
    {"codec.kl_weight", "desk"},
    {"stage1.model_res", "desk"},        // paper preset: 512
    {"stage1.lr", "paper"},              // 1e-4
    {"stage1.batch_size", "desk"},       // paper preset: 8
    {"stage1.steps", "desk"},            // paper preset: 25000
    {"stage1.cfg_dropout", "paper"},     // 0.2
    {"stage1.ratio_min", "paper"},       // crop ratio range 0.3..0.6
    {"stage1.ratio_max", "paper"},
    {"stage1.obj_embed_dim", "desk"},    // paper: 768 (frozen feature encoder)
    {"stage1.augment.rotation_max_deg", "paper"},  // -90..90 degrees
    {"stage2.model_res", "desk"},        // paper preset: 256
    {"stage2.num_frames", "desk"},       // paper preset: 14
    {"stage2.lr", "desk"},               // paper preset: 1e-5
    {"stage2.batch_size", "desk"},       // paper preset: 1
    {"stage2.steps", "desk"},            // paper preset: 50000
    {"stage2.cfg_dropout", "paper"},     // 0.2
    {"stage2.ctx_embed_dim", "desk"},    // paper: 768
    {"pipeline.r", "paper"},             // default sparsity 50%
    {"pipeline.guidance_scale", "desk"},
    {"pipeline.flow_backend", "desk"},
    {"diffusion.timesteps", "desk"},
    {"metrics.smoothness_scale", "desk"},
};

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object())
        throw ValidationError(where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValidationError(where.empty() ? it.key() : where + "." + it.key(),
                                  "unknown configuration key");
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key))
        j.at(key).get_to(out);
}

}  // namespace

RunConfig RunConfig::defaults(const std::string& preset) {
    RunConfig c;
    c.preset = preset;
    if (preset == "paper") {
        // config echo of the published scale; not meant to be trained here
        c.stage1.model_res = 512;
        c.stage1.steps = 25000;
        c.stage1.lr = 1e-4;
        c.stage1.batch_size = 8;
        c.stage1.obj_embed_dim = 768;
        c.stage2.model_res = 256;
        c.stage2.num_frames = 14;
        c.stage2.steps = 50000;
        c.stage2.lr = 1e-5;
        c.stage2.batch_size = 1;
        c.stage2.ctx_embed_dim = 768;
        c.stage2.train_temporal_only = true;
    } else if (preset != "desk") {
        throw ValidationError("preset", "unknown preset '" + preset + "'");
    }
    return c;
}

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j, {"preset", "corpus", "codec", "stage1", "stage2", "one_stage", "pipeline",
                   "metrics", "paths"},
               "");
    RunConfig c = defaults(j.value("preset", "desk"));

    if (j.contains("corpus")) {
        const json& s = j.at("corpus");
        check_keys(s, {"num_clips", "frame_size", "num_frames", "seed", "eval_fraction", "overwrite"},
                   "corpus");
        get_to(s, "num_clips", c.corpus.num_clips);
        get_to(s, "frame_size", c.corpus.frame_size);
        get_to(s, "num_frames", c.corpus.num_frames);
        get_to(s, "seed", c.corpus.seed);
        get_to(s, "eval_fraction", c.corpus.eval_fraction);
        get_to(s, "overwrite", c.corpus.overwrite);
    }
    if (j.contains("codec")) {
        const json& s = j.at("codec");
        check_keys(s, {"latent_channels", "c0", "c1", "c2", "c3", "dec_c0", "steps", "lr",
                       "batch_size", "kl_weight", "corrupt_prob", "seed"},
                   "codec");
        c.codec = CodecConfig::from_json(s);
    }
    if (j.contains("stage1")) {
        const json& s = j.at("stage1");
        check_keys(s, {"model_res", "base_channels", "obj_embed_dim", "obj_input_res", "lr",
                       "batch_size", "steps", "cfg_dropout", "ratio_min", "ratio_max",
                       "allow_same_frame", "pairs_per_frame", "timesteps", "schedule", "seed"},
                   "stage1");
        c.stage1 = Stage1Config::from_json(s, c.stage1);
    }
    if (j.contains("stage2")) {
        const json& s = j.at("stage2");
        check_keys(s, {"num_frames", "model_res", "base_channels", "ctx_embed_dim", "ctx_input_res",
                       "lr", "batch_size", "steps", "cfg_dropout", "flow_backend",
                       "variants_per_clip", "temporal_enabled", "train_temporal_only", "box_mode",
                       "timesteps", "schedule", "seed"},
                   "stage2");
        c.stage2 = Stage2Config::from_json(s, c.stage2);
    }
    if (j.contains("one_stage")) {
        const json& s = j.at("one_stage");
        check_keys(s, {"num_frames", "model_res", "base_channels", "obj_embed_dim", "obj_input_res",
                       "lr", "batch_size", "steps", "cfg_dropout", "variants_per_clip", "box_mode",
                       "timesteps", "schedule", "seed"},
                   "one_stage");
        c.one_stage = OneStageConfig::from_json(s, c.one_stage);
    }
    if (j.contains("pipeline")) {
        const json& s = j.at("pipeline");
        check_keys(s, {"r", "guidance_scale", "flow_backend", "box_source", "stage1_ratio", "seed"},
                   "pipeline");
        get_to(s, "r", c.pipeline.r);
        get_to(s, "guidance_scale", c.pipeline.guidance_scale);
        get_to(s, "flow_backend", c.pipeline.flow_backend);
        get_to(s, "box_source", c.pipeline.box_source);
        get_to(s, "stage1_ratio", c.pipeline.stage1_ratio);
        get_to(s, "seed", c.pipeline.seed);
    }
    if (j.contains("metrics")) {
        const json& s = j.at("metrics");
        check_keys(s, {"smoothness_scale", "hue_lo", "hue_hi", "sat_min", "dilation_radius"},
                   "metrics");
        get_to(s, "smoothness_scale", c.metrics.smoothness_scale);
        get_to(s, "hue_lo", c.metrics.hue_lo);
        get_to(s, "hue_hi", c.metrics.hue_hi);
        get_to(s, "sat_min", c.metrics.sat_min);
        get_to(s, "dilation_radius", c.metrics.dilation_radius);
    }
    if (j.contains("paths")) {
        const json& s = j.at("paths");
        check_keys(s, {"data", "codec_ckpt", "stage1_ckpt", "stage2_ckpt", "one_stage_ckpt"},
                   "paths");
        get_to(s, "data", c.paths.data);
        get_to(s, "codec_ckpt", c.paths.codec_ckpt);
        get_to(s, "stage1_ckpt", c.paths.stage1_ckpt);
        get_to(s, "stage2_ckpt", c.paths.stage2_ckpt);
        get_to(s, "one_stage_ckpt", c.paths.one_stage_ckpt);
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open config: " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ValidationError("config", std::string("JSON parse error: ") + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    j["preset"] = preset;
    j["corpus"] = {{"num_clips", corpus.num_clips},       {"frame_size", corpus.frame_size},
                   {"num_frames", corpus.num_frames},     {"seed", corpus.seed},
                   {"eval_fraction", corpus.eval_fraction}, {"overwrite", corpus.overwrite}};
    j["codec"] = codec.to_json();
    j["stage1"] = stage1.to_json();
    j["stage2"] = stage2.to_json();
    j["one_stage"] = one_stage.to_json();
    j["pipeline"] = {{"r", pipeline.r},
                     {"guidance_scale", pipeline.guidance_scale},
                     {"flow_backend", pipeline.flow_backend},
                     {"box_source", pipeline.box_source},
                     {"stage1_ratio", pipeline.stage1_ratio},
                     {"seed", pipeline.seed}};
    j["metrics"] = {{"smoothness_scale", metrics.smoothness_scale},
                    {"hue_lo", metrics.hue_lo},
                    {"hue_hi", metrics.hue_hi},
                    {"sat_min", metrics.sat_min},
                    {"dilation_radius", metrics.dilation_radius}};
    j["paths"] = {{"data", paths.data},
                  {"codec_ckpt", paths.codec_ckpt},
                  {"stage1_ckpt", paths.stage1_ckpt},
                  {"stage2_ckpt", paths.stage2_ckpt},
                  {"one_stage_ckpt", paths.one_stage_ckpt}};
    return j;
}

json RunConfig::resolved_with_provenance() const {
    json j = to_json();
    json prov;
    for (const auto& [key, src] : kProvenance)
        prov[key] = src;
    j["_provenance"] = prov;
    return j;
}

void RunConfig::save_resolved(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw IoError("cannot write resolved config: " + path);
    f << resolved_with_provenance().dump(2) << "\n";
}

}  // namespace objswap
