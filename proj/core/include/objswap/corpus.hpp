#pragma once

#include "objswap/image.hpp"
#include "objswap/rng.hpp"
#include "objswap/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace objswap {

enum class ObjectShape { disk, square, mug, bottle, kettle };

const char* shape_name(ObjectShape s);
ObjectShape shape_from_name(const std::string& name);

// Radius of the square structuring element used when deciding hand-object
// contact from masks. Shared with the rule-based detector defaults.
inline constexpr int kContactDilationRadius = 2;

// Objects never use this HSV hue band; the gripper always does (sat >= 0.5).
inline constexpr double kHandHueLo = 0.55;
inline constexpr double kHandHueHi = 0.65;

struct SceneSpec {
    ObjectShape object_shape = ObjectShape::disk;
    Rgb object_color;
    std::vector<std::pair<int, int>> trajectory;  // (x,y) object center per frame
    int grasp_frame = 0;
    int frame_h = 64, frame_w = 64;
    int num_frames = 8;
    uint64_t rng_seed = 0;

    void validate() const;  // throws ValidationError naming the field
};

struct VideoClip {
    std::vector<Tensor> frames;        // [3,H,W] each
    std::vector<Tensor> object_masks;  // [H,W], 1 where the object is visible
    std::vector<Tensor> hand_masks;    // [H,W]
    std::vector<bool> contact_flags;
    std::vector<Tensor> gt_flow;  // N-1 fields [2,H,W]: plane 0 = dx, plane 1 = dy
    Tensor object_sprite;         // [4,sh,sw] unoccluded object, alpha = support
    SceneSpec metadata;

    std::string id;
    std::string split;  // "train" | "eval" when loaded from a dataset
    int instance_id = -1;

    int height() const { return frames.empty() ? 0 : image_height(frames[0]); }
    int width() const { return frames.empty() ? 0 : image_width(frames[0]); }
    int frame_count() const { return (int)frames.size(); }
};

// Deterministic for a fixed spec (all randomness derives from spec.rng_seed).
VideoClip generate_clip(const SceneSpec& spec);

// Recompute a contact flag from masks; generate_clip guarantees stored flags
// match this rule.
bool masks_in_contact(const Tensor& hand_mask, const Tensor& object_mask,
                      int dilation_radius = kContactDilationRadius);

struct CorpusConfig {
    int num_clips = 64;
    int frame_size = 64;
    int num_frames = 8;
    uint64_t seed = 1;
    double eval_fraction = 0.1;  // split by object instance
    bool overwrite = false;
};

struct DatasetIndex {
    struct Entry {
        std::string id;
        std::string split;
        std::string shape;
        int instance_id = -1;
    };
    std::vector<Entry> clips;
    int frame_size = 0;
    int num_frames = 0;

    std::vector<Entry> with_split(const std::string& split) const;
};

// Writes the on-disk dataset format:
//   <out>/index.json
//   <out>/clips/<id>/frame_####.png, obj_mask_####.png, hand_mask_####.png,
//                    flow_####.bin, sprite.png, meta.json
void generate_corpus(const CorpusConfig& config, const std::string& out_dir);

void save_clip(const VideoClip& clip, const std::string& clip_dir);
VideoClip load_clip(const std::string& clip_dir);
DatasetIndex load_index(const std::string& dataset_dir);
std::string clip_dir_for(const std::string& dataset_dir, const std::string& clip_id);

// flow_####.bin payload: row-major float32 (dx, dy) pairs per pixel.
void write_flow_file(const std::string& path, const Tensor& flow);
Tensor read_flow_file(const std::string& path, int h, int w);

}  // namespace objswap
