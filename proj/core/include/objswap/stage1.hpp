#pragma once

#include "objswap/codec.hpp"
#include "objswap/corpus.hpp"
#include "objswap/diffusion.hpp"
#include "objswap/embedders.hpp"
#include "objswap/masking.hpp"
#include "objswap/ref_object.hpp"
#include "objswap/unet2d.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace objswap {

struct Stage1Config {
    int model_res = 64;
    int base_channels = 48;
    int obj_embed_dim = 128;
    int obj_input_res = 32;
    double lr = 1e-4;           // desk default; the paper preset keeps 1e-4 too
    int batch_size = 16;
    int steps = 5000;
    double cfg_dropout = 0.2;
    double ratio_min = 0.3, ratio_max = 0.6;
    bool allow_same_frame = false;
    int pairs_per_frame = 2;
    int timesteps = 256;
    std::string schedule = "linear";
    uint64_t seed = 1;
    AugmentConfig augment;

    nlohmann::json to_json() const;
    static Stage1Config from_json(const nlohmann::json& j);
    static Stage1Config from_json(const nlohmann::json& j, const Stage1Config& base);
    NoiseSchedule make_schedule() const;
};

struct Stage1Example {
    Tensor z;        // target latent [4,h,w]
    Tensor z_m;      // collaged masked-frame latent [4,h,w]
    Tensor obj_img;  // object-encoder input [3,R,R]
    std::string clip_id;
    int frame_index = 0;
};

// Full §-style pair construction: squarify + crop/center at a random ratio,
// mask, alternate-frame object extraction + occlusion fill + augmentation,
// collage, then encode both sides.
Stage1Example build_training_pair(const VideoClip& clip, int frame_index, Rng& rng,
                                  const Stage1Config& config, CodecModel& codec);

class Stage1Model {
public:
    Stage1Model(const Stage1Config& config, uint64_t init_seed);

    Stage1Config config;
    UNet2d unet;
    ConvEmbedder obj_encoder;
    NoiseSchedule schedule;

    Tensor encode_object(const RefObjectImage& obj);     // [D], unit norm
    Tensor encode_object_batch(const Tensor& obj_imgs);  // [B,3,R,R] -> [B,D]

    std::vector<nn::ParamRef> params();
};

struct Stage1TrainStats {
    double step0_val_loss = 0.0;
    double final_val_loss = 0.0;
    int steps_run = 0;
    int64_t dropout_events = 0;   // per-channel per-sample drops observed
    int64_t dropout_draws = 0;
};

Stage1TrainStats train_stage1(const std::string& dataset_dir, CodecModel& codec,
                              const Stage1Config& config, const std::string& out_ckpt,
                              const std::string& log_path, Stage1Model* out_model = nullptr);

void save_stage1(Stage1Model& model, const std::string& path);
Stage1Model load_stage1(const std::string& path);

struct EditFrameOptions {
    double ratio = 0.45;  // crop ratio at inference, within the training range
    double guidance_scale = 3.0;
    uint64_t seed = 1;
    Resample mode = Resample::bilinear;
};

struct EditFrameResult {
    Tensor frame;        // full-resolution edited frame
    BBox box;            // squarified box that was repainted
    Tensor model_frame;  // model-space edit (decoded), for inspection
};

// Swap the boxed region of one frame with the reference object; pixels
// outside the box stay bit-identical to the source.
EditFrameResult edit_frame(const Tensor& frame, const BBox& box, const RefObjectImage& ref,
                           Stage1Model& model, CodecModel& codec, const EditFrameOptions& opts);

}  // namespace objswap
