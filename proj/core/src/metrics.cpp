#include "objswap/metrics.hpp"

#include "objswap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

namespace objswap {

HandDetection detect_hand(const Tensor& frame, const BBox& eval_box, const HandDetectorConfig& cfg) {
    int h = image_height(frame), w = image_width(frame);
    Tensor band({h, w});
    int64_t total = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto hsv = rgb_to_hsv(frame.at(0, y, x), frame.at(1, y, x), frame.at(2, y, x));
            if (hsv[0] >= cfg.hue_lo && hsv[0] <= cfg.hue_hi && hsv[1] >= cfg.sat_min) {
                band.at(y, x) = 1.0;
                ++total;
            }
        }
    HandDetection det;
    if (total == 0)
        return det;

    // largest 8-connected component
    Tensor visited({h, w});
    Tensor best_comp({h, w});
    int64_t best_size = 0;
    for (int sy = 0; sy < h; ++sy)
        for (int sx = 0; sx < w; ++sx) {
            if (band.at(sy, sx) < 0.5 || visited.at(sy, sx) > 0.5)
                continue;
            Tensor comp({h, w});
            int64_t size = 0;
            std::queue<std::pair<int, int>> q;
            q.push({sx, sy});
            visited.at(sy, sx) = 1.0;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                comp.at(cy, cx) = 1.0;
                ++size;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h)
                            continue;
                        if (band.at(ny, nx) > 0.5 && visited.at(ny, nx) < 0.5) {
                            visited.at(ny, nx) = 1.0;
                            q.push({nx, ny});
                        }
                    }
            }
            if (size > best_size) {
                best_size = size;
                best_comp = comp;
            }
        }

    det.hand_box = bbox_from_mask(best_comp);
    det.confidence = (double)best_size / (double)total;
    Tensor grown = dilate(best_comp, cfg.dilation_radius);
    for (int y = eval_box.y0; y < eval_box.y1 && !det.in_contact; ++y)
        for (int x = eval_box.x0; x < eval_box.x1; ++x)
            if (grown.at(y, x) > 0.5) {
                det.in_contact = true;
                break;
            }
    return det;
}

double box_iou(const BBox& a, const BBox& b) {
    int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    int64_t inter = (int64_t)std::max(0, ix1 - ix0) * std::max(0, iy1 - iy0);
    int64_t uni = a.area() + b.area() - inter;
    return uni > 0 ? (double)inter / (double)uni : 0.0;
}

namespace {

void check_pair(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.empty() || a.size() != b.size())
        throw ValidationError("frames", "source/edited must be non-empty and equal length");
}

}  // namespace

double contact_agreement(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                         const BBox& eval_box, const HandDetectorConfig& cfg) {
    check_pair(source, edited);
    int match = 0;
    for (size_t i = 0; i < source.size(); ++i) {
        bool s = detect_hand(source[i], eval_box, cfg).in_contact;
        bool e = detect_hand(edited[i], eval_box, cfg).in_contact;
        if (s == e)
            ++match;
    }
    return (double)match / (double)source.size();
}

double hand_agreement(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                      const BBox& eval_box, const HandDetectorConfig& cfg) {
    check_pair(source, edited);
    double acc = 0;
    for (size_t i = 0; i < source.size(); ++i) {
        auto s = detect_hand(source[i], eval_box, cfg);
        auto e = detect_hand(edited[i], eval_box, cfg);
        if (s.hand_box && e.hand_box)
            acc += box_iou(*s.hand_box, *e.hand_box);
        else if (!s.hand_box && !e.hand_box)
            acc += 1.0;
        // one missing contributes 0
    }
    return acc / (double)source.size();
}

double hand_fidelity(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                     const BBox& eval_box, const HandDetectorConfig& cfg) {
    check_pair(source, edited);
    double acc = 0;
    int n = 0;
    for (size_t i = 0; i < source.size(); ++i) {
        if (!detect_hand(source[i], eval_box, cfg).hand_box)
            continue;
        acc += detect_hand(edited[i], eval_box, cfg).confidence;
        ++n;
    }
    return n > 0 ? acc / n : 0.0;
}

double subject_consistency(const std::vector<Tensor>& edited, const BBox& eval_box,
                           const EmbedFn& embed) {
    if (edited.size() < 2)
        return 1.0;
    std::vector<Tensor> embs;
    for (const auto& f : edited)
        embs.push_back(embed(crop(f, eval_box.x0, eval_box.y0, eval_box.width(), eval_box.height())));
    double acc = 0;
    for (size_t i = 0; i + 1 < embs.size(); ++i) {
        double d = dot(embs[i], embs[i + 1]);
        double na = std::sqrt(std::max(dot(embs[i], embs[i]), 1e-16));
        double nb = std::sqrt(std::max(dot(embs[i + 1], embs[i + 1]), 1e-16));
        double cosv = d / (na * nb);
        acc += (std::clamp(cosv, -1.0, 1.0) + 1.0) * 0.5;
    }
    return acc / (double)(embs.size() - 1);
}

double motion_smoothness(const std::vector<Tensor>& edited, double scale) {
    if (edited.size() < 3)
        return 1.0;
    double acc = 0;
    int64_t count = 0;
    for (size_t i = 1; i + 1 < edited.size(); ++i) {
        for (int64_t k = 0; k < edited[i].numel(); ++k)
            acc += std::fabs(edited[i + 1][k] - 2.0 * edited[i][k] + edited[i - 1][k]);
        count += edited[i].numel();
    }
    double mean_second_diff = acc / (double)count;
    return 1.0 - std::min(1.0, mean_second_diff / scale);
}

double in_box_mse(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                  const BBox& box) {
    check_pair(source, edited);
    double acc = 0;
    int64_t count = 0;
    for (size_t i = 0; i < source.size(); ++i)
        for (int c = 0; c < 3; ++c)
            for (int y = box.y0; y < box.y1; ++y)
                for (int x = box.x0; x < box.x1; ++x) {
                    double d = source[i].at(c, y, x) - edited[i].at(c, y, x);
                    acc += d * d;
                    ++count;
                }
    return acc / (double)count;
}

double motion_alignment(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                        const BBox& eval_box, double scale) {
    return 1.0 - std::min(1.0, in_box_mse(source, edited, eval_box) / scale);
}

MetricReport evaluate_video(const std::vector<Tensor>& source, const std::vector<Tensor>& edited,
                            const BBox& eval_box, const EmbedFn& embed,
                            const HandDetectorConfig& cfg, double smoothness_scale) {
    check_pair(source, edited);
    MetricReport rep;
    for (size_t i = 0; i < source.size(); ++i) {
        auto s = detect_hand(source[i], eval_box, cfg);
        auto e = detect_hand(edited[i], eval_box, cfg);
        rep.per_frame_contact_match.push_back(s.in_contact == e.in_contact ? 1.0 : 0.0);
        double iou = (s.hand_box && e.hand_box) ? box_iou(*s.hand_box, *e.hand_box)
                     : (!s.hand_box && !e.hand_box) ? 1.0 : 0.0;
        rep.per_frame_iou.push_back(iou);
        rep.per_frame_confidence.push_back(e.confidence);
    }
    rep.contact_agreement = contact_agreement(source, edited, eval_box, cfg);
    rep.hand_agreement = hand_agreement(source, edited, eval_box, cfg);
    rep.hand_fidelity = hand_fidelity(source, edited, eval_box, cfg);
    rep.subject_consistency = embed ? subject_consistency(edited, eval_box, embed) : 0.0;
    rep.motion_smoothness = motion_smoothness(edited, smoothness_scale);
    rep.motion_alignment = motion_alignment(source, edited, eval_box);
    return rep;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f)
        throw IoError("cannot open for write: " + path);
    f << "clip,method,r,contact_agreement,hand_agreement,hand_fidelity,subject_consistency,"
         "motion_smoothness,motion_alignment\n";
    for (const auto& row : rows) {
        f << row.clip << ',' << row.method << ',' << row.r << ',' << row.report.contact_agreement
          << ',' << row.report.hand_agreement << ',' << row.report.hand_fidelity << ','
          << row.report.subject_consistency << ',' << row.report.motion_smoothness << ','
          << row.report.motion_alignment << "\n";
    }
}

}  // namespace objswap
