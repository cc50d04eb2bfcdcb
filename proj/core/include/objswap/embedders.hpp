#pragma once

#include "objswap/image.hpp"
#include "objswap/nn.hpp"
#include "objswap/ref_object.hpp"

#include <memory>

namespace objswap {

// Small conv encoder: three stride-2 convs, global average pool, projection.
// Trained jointly with whichever denoiser consumes its output.
class ConvEmbedder {
public:
    ConvEmbedder(int input_res, int embed_dim, bool l2_normalize, uint64_t init_seed,
                 const std::string& name);

    Tensor forward(const Tensor& x);       // [B,3,R,R] -> [B,D]
    Tensor backward(const Tensor& gy);     // accumulates param grads
    std::vector<nn::ParamRef> params();

    int input_res() const { return input_res_; }
    int embed_dim() const { return embed_dim_; }

private:
    int input_res_, embed_dim_;
    bool l2_;
    std::string name_;
    struct Impl;
    std::shared_ptr<Impl> impl_;
    Tensor y_, pre_norm_;
};

// Alpha-masked object image on a black square canvas at the encoder input
// resolution.
Tensor prepare_object_input(const RefObjectImage& obj, int res,
                            Resample mode = Resample::bilinear);

// Whole-frame input resized to the encoder resolution.
Tensor prepare_context_input(const Tensor& frame, int res,
                             Resample mode = Resample::bilinear);

}  // namespace objswap
