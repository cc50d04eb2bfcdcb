#pragma once

#include "objswap/bbox.hpp"
#include "objswap/image.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace objswap {

struct HandDetectorConfig {
    double hue_lo = 0.55, hue_hi = 0.65;
    double sat_min = 0.5;
    int dilation_radius = 2;
};

struct HandDetection {
    std::optional<BBox> hand_box;  // tight box of the largest hue-band component
    bool in_contact = false;       // dilated component touches the evaluation box
    double confidence = 0.0;       // largest component area / total hue-band area
};

HandDetection detect_hand(const Tensor& frame, const BBox& eval_box,
                          const HandDetectorConfig& cfg = {});

// Per-frame embedding of a box crop; metrics stay agnostic of the encoder.
using EmbedFn = std::function<Tensor(const Tensor& frame_crop)>;

double contact_agreement(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                         const BBox& eval_box, const HandDetectorConfig& cfg = {});
// Mean IoU of detected hand boxes; both-missing counts 1, one-missing 0.
double hand_agreement(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                      const BBox& eval_box, const HandDetectorConfig& cfg = {});
// Mean confidence over frames where the source had a hand.
double hand_fidelity(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                     const BBox& eval_box, const HandDetectorConfig& cfg = {});
// Mean consecutive-frame cosine similarity of box-crop embeddings, mapped
// from [-1,1] to [0,1].
double subject_consistency(const std::vector<Tensor>& edited, const BBox& eval_box,
                           const EmbedFn& embed);
// 1 - min(1, mean second-order temporal difference / scale). A proxy for the
// interpolation-model prior; the scale default is 0.25 of the dynamic range.
double motion_smoothness(const std::vector<Tensor>& edited, double scale = 0.25);
// 1 - min(1, in-box MSE between edited and source / scale); the motion
// alignment proxy used by the sparsity ablation tables.
double motion_alignment(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                        const BBox& eval_box, double scale = 0.25);

double box_iou(const BBox& a, const BBox& b);
double in_box_mse(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                  const BBox& box);

struct MetricReport {
    double contact_agreement = 0, hand_agreement = 0, hand_fidelity = 0;
    double subject_consistency = 0, motion_smoothness = 0, motion_alignment = 0;
    std::vector<double> per_frame_contact_match, per_frame_iou, per_frame_confidence;
};

MetricReport evaluate_video(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                            const BBox& eval_box, const EmbedFn& embed,
                            const HandDetectorConfig& cfg = {}, double smoothness_scale = 0.25);

struct MetricsRow {
    std::string clip, method;
    double r = 0;
    MetricReport report;
};

// Stable column order: clip,method,r,contact_agreement,hand_agreement,
// hand_fidelity,subject_consistency,motion_smoothness,motion_alignment
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace objswap
