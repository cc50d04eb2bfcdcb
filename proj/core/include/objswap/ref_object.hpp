#pragma once

#include "objswap/bbox.hpp"
#include "objswap/corpus.hpp"
#include "objswap/image.hpp"
#include "objswap/rng.hpp"

#include <string>

namespace objswap {

// Augmentation parameters; fully determine the transform so any augmented
// object can be replayed bit-exactly from provenance.
struct AugmentParams {
    bool flip = false;
    double rotation_deg = 0.0;
    double scale = 1.0;
    double corner_jitter[8] = {0, 0, 0, 0, 0, 0, 0, 0};  // (dx,dy) per corner, fraction of side
    Resample mode = Resample::bilinear;
};

struct AugmentConfig {
    double p_flip = 0.5;
    double p_rotation = 0.8;
    double p_perspective = 0.5;
    double p_resize = 0.8;
    double rotation_max_deg = 90.0;  // angle uniform in [-max, max]
    double perspective_jitter_max = 0.15;
    double scale_min = 0.7, scale_max = 1.3;
    Resample mode = Resample::bilinear;
};

struct RefProvenance {
    std::string source_clip_id;
    int source_frame = -1;
    AugmentParams aug;
    bool augmented = false;
    bool used_morphological_fill = false;
};

struct RefObjectImage {
    Tensor rgba;  // [4,h,w], alpha > 0 only on object pixels
    RefProvenance provenance;
};

// RGB copied where mask = 1, alpha 1 there, cropped to the tight box.
RefObjectImage extract_object(const Tensor& frame, const Tensor& object_mask);

// Complete occluded object pixels from the generator's unoccluded sprite,
// aligned by maximum-overlap integer offset; output alpha equals the sprite
// support. Without a sprite, falls back to a morphological closing fill and
// flags it in provenance.
RefObjectImage fill_occlusion(const RefObjectImage& obj, const VideoClip& clip);
RefObjectImage fill_occlusion_from_sprite(const RefObjectImage& obj, const Tensor* sprite_rgba);

RefObjectImage augment(const RefObjectImage& obj, Rng& rng, const AugmentConfig& config = {});
// Re-apply a recorded transform; bit-identical to the original application.
RefObjectImage replay_augment(const RefObjectImage& obj, const AugmentParams& params);

// Uniform over frames with a nonempty object mask; the source frame itself
// is excluded whenever another candidate exists, unless allow_same_frame.
int pick_alternate_frame(const VideoClip& clip, int frame_index, Rng& rng,
                         bool allow_same_frame = false);

// Scale the object uniformly so its longest side is fit_factor * box side,
// center it in the box and alpha-composite over the zeroed region. Never
// writes outside the box.
Tensor collage(const Tensor& masked_frame, const BBox& box, const RefObjectImage& obj,
               Resample mode = Resample::bilinear, double fit_factor = 0.9);

}  // namespace objswap
