#pragma once

#include "objswap/codec.hpp"
#include "objswap/metrics.hpp"
#include "objswap/stage1.hpp"
#include "objswap/stage2.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace objswap {

enum class BoxSource { ground_truth, from_mask, user_box };
enum class AnchorPolicy { auto_contact, fixed_index };

struct EditRequest {
    std::string clip_dir;
    std::string ref_image;  // path of an RGBA/RGB reference object image
    BoxSource box_source = BoxSource::ground_truth;
    std::optional<BBox> user_box;
    AnchorPolicy anchor_policy = AnchorPolicy::auto_contact;
    int fixed_index = 0;
    double r = 50.0;  // sparsity default from the training recipe
    uint64_t seed = 1;
    double guidance_scale = 3.0;
    std::string flow_backend = "oracle";
    double stage1_ratio = 0.45;
    std::string out_dir;  // empty: nothing written
};

struct Models {
    CodecModel codec;
    Stage1Model stage1;
    Stage2Model stage2;

    static Models load(const std::string& codec_path, const std::string& stage1_path,
                       const std::string& stage2_path);
};

// Contact frames via the rule-based detector, uniform choice among them;
// falls back to the middle frame (with a warning flag) when none qualify.
int select_edit_frame(const std::vector<Tensor>& frames, const BBox& eval_box, Rng& rng,
                      bool* no_contact_fallback = nullptr, const HandDetectorConfig& cfg = {});

// Rule-based object support for the estimated-box mode: saturated pixels
// outside the reserved hand hue band, dilated by one.
Tensor estimate_object_mask(const Tensor& frame, const HandDetectorConfig& cfg = {});

struct EditResult {
    std::vector<Tensor> frames;
    nlohmann::json report;
    int anchor_index = 0;
    BBox shared_box;
};

EditResult run_edit(const EditRequest& req, Models& models);

// One edit per sparsity value with shared seeds, plus a per-r metric table.
struct SparsityAblation {
    std::vector<double> r_values;
    std::vector<EditResult> edits;
    std::vector<MetricsRow> table;
};
SparsityAblation ablate_sparsity(const EditRequest& req, const std::vector<double>& r_values,
                                 Models& models);

// One edit per anchor index, with in-box reconstruction error per index.
struct FrameChoiceAblation {
    std::vector<int> indices;
    std::vector<EditResult> edits;
    std::vector<double> in_box_errors;
};
FrameChoiceAblation ablate_frame_choice(const EditRequest& req, const std::vector<int>& indices,
                                        Models& models);

// Horizontal strip of frames (optionally several rows), for contact sheets.
Tensor frame_grid(const std::vector<std::vector<Tensor>>& rows, int pad = 2);

void save_frames(const std::vector<Tensor>& frames, const std::string& dir,
                 const std::string& stem = "frame");

}  // namespace objswap
