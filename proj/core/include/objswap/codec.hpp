#pragma once

#include "objswap/corpus.hpp"
#include "objswap/nn.hpp"
#include "objswap/tensor.hpp"

#include <json.hpp>

#include <string>

namespace objswap {

struct CodecConfig {
    int latent_channels = 4;  // spatial factor is fixed at /8
    int c0 = 24, c1 = 32, c2 = 48, c3 = 64;  // encoder widths per scale
    int dec_c0 = 16;                         // decoder width at full resolution
    int steps = 2500;
    double lr = 1.5e-3;
    int batch_size = 8;
    double kl_weight = 1e-5;
    // fraction of training samples replaced by conditioning-style corruptions
    // (zeroed box, zeroed box + color dots, sprite collage) so the codec can
    // encode the inputs the diffusion stages actually see
    double corrupt_prob = 0.45;
    uint64_t seed = 1;

    nlohmann::json to_json() const;
    static CodecConfig from_json(const nlohmann::json& j);
};

// Conv autoencoder standing in for the pretrained VAE: 4-channel latents at
// 1/8 spatial resolution. encode() returns the deterministic posterior mean
// (scaled); sampling happens only inside training.
class CodecModel {
public:
    explicit CodecModel(const CodecConfig& config, uint64_t init_seed = 7);

    // [3,H,W] -> [latent_channels, H/8, W/8]; requires H,W divisible by 8
    Tensor encode(const Tensor& frame);
    // inverse of encode's scaling; output clamped to [0,1]
    Tensor decode(const Tensor& z);

    Tensor encode_batch(const Tensor& x);  // [B,3,H,W] -> [B,4,h,w]

    // training-path forward: returns (mu, logvar) without scaling
    std::pair<Tensor, Tensor> encode_train(const Tensor& x);
    Tensor decode_train(const Tensor& z);  // unclamped
    Tensor decoder_backward(const Tensor& gxhat);
    // gmu/glogvar -> input grad (unused) while accumulating param grads
    void encoder_backward(const Tensor& gmu, const Tensor& glogvar);

    std::vector<nn::ParamRef> params();
    CodecConfig& config() { return config_; }
    const CodecConfig& config() const { return config_; }

    double latent_scale = 1.0;

private:
    CodecConfig config_;
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

struct CodecTrainStats {
    double step0_val_loss = 0.0;
    double final_val_loss = 0.0;
    double heldout_psnr = 0.0;
    int steps_run = 0;
};

// Trains on the dataset's train split (plus corruption variants), evaluates
// PSNR on held-out eval clips, computes the latent scale, writes an ndjson
// log of {step, loss, lr} and a checkpoint.
CodecTrainStats train_codec(const std::string& dataset_dir, const CodecConfig& config,
                            const std::string& out_ckpt, const std::string& log_path,
                            CodecModel* out_model = nullptr);

void save_codec(const CodecModel& model, const std::string& path);
CodecModel load_codec(const std::string& path);

}  // namespace objswap
