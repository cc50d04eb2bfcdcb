#pragma once

#include "objswap/bbox.hpp"
#include "objswap/image.hpp"

#include <optional>
#include <vector>

namespace objswap {

// Records how a frame window was cropped and resized so edited content can
// be pasted back. Mapping between model coordinates and frame coordinates
// is affine: frame = window_origin + model * window_side / model_res.
struct CropTransform {
    int win_x0 = 0, win_y0 = 0;
    int win_side = 0;
    int model_res = 0;
    Resample mode = Resample::bilinear;

    double model_to_frame_x(double mx) const { return win_x0 + (mx + 0.5) * win_side / model_res - 0.5; }
    double model_to_frame_y(double my) const { return win_y0 + (my + 0.5) * win_side / model_res - 0.5; }
    double frame_to_model_x(double fx) const { return (fx - win_x0 + 0.5) * model_res / win_side - 0.5; }
    double frame_to_model_y(double fy) const { return (fy - win_y0 + 0.5) * model_res / win_side - 0.5; }

    // Box mapped into model coordinates, rounded to pixels.
    BBox box_in_model(const BBox& frame_box) const;
};

struct MaskedSequence {
    std::vector<Tensor> frames;  // each [3,H,W], zeros inside `box`
    BBox box;                    // shared square box
    std::optional<CropTransform> crop_transform;
    // Frames whose object mask has pixels outside the shared box (coverage
    // violations are logged, not fixed).
    std::vector<int> coverage_violations;
};

// Zero all pixels inside `box`; everything else is preserved.
Tensor mask_frame(const Tensor& frame, const BBox& box);

// Window chosen so box_side / window_side == ratio and centers coincide,
// clamped to the frame, then resized to model_res x model_res.
std::pair<Tensor, CropTransform> crop_center(const Tensor& frame, const BBox& box, double ratio,
                                             int model_res, Resample mode = Resample::bilinear,
                                             double ratio_min = 0.3, double ratio_max = 0.6);

// Paste the box region of an edited model-space frame back into the source
// frame; pixels outside the box are left bit-identical to the source.
Tensor paste_back(const Tensor& source_frame, const Tensor& edited_model, const BBox& frame_box,
                  const CropTransform& t);

enum class SequenceBoxMode { largest_area, union_box };

// Square per-frame boxes from the object masks; the largest-area one (or the
// union) is applied to every frame.
MaskedSequence mask_sequence(const std::vector<Tensor>& frames,
                             const std::vector<Tensor>& object_masks,
                             SequenceBoxMode mode = SequenceBoxMode::largest_area);

}  // namespace objswap
