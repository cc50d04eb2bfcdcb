#include "objswap/masking.hpp"

#include "objswap/errors.hpp"

#include <algorithm>
#include <cmath>

namespace objswap {

BBox CropTransform::box_in_model(const BBox& frame_box) const {
    double scale = (double)model_res / win_side;
    int mx0 = (int)std::lround((frame_box.x0 - win_x0) * scale);
    int my0 = (int)std::lround((frame_box.y0 - win_y0) * scale);
    int mx1 = (int)std::lround((frame_box.x1 - win_x0) * scale);
    int my1 = (int)std::lround((frame_box.y1 - win_y0) * scale);
    mx0 = std::clamp(mx0, 0, model_res - 1);
    my0 = std::clamp(my0, 0, model_res - 1);
    mx1 = std::clamp(mx1, mx0 + 1, model_res);
    my1 = std::clamp(my1, my0 + 1, model_res);
    return {mx0, my0, mx1, my1};
}

Tensor mask_frame(const Tensor& frame, const BBox& box) {
    box.validate(image_height(frame), image_width(frame));
    Tensor out = frame;
    for (int c = 0; c < frame.shape[0]; ++c)
        for (int y = box.y0; y < box.y1; ++y)
            for (int x = box.x0; x < box.x1; ++x)
                out.at(c, y, x) = 0.0;
    return out;
}

std::pair<Tensor, CropTransform> crop_center(const Tensor& frame, const BBox& box, double ratio,
                                             int model_res, Resample mode,
                                             double ratio_min, double ratio_max) {
    int h = image_height(frame), w = image_width(frame);
    box.validate(h, w);
    if (!(ratio >= ratio_min && ratio <= ratio_max))
        throw ValidationError("ratio", "must be in [" + std::to_string(ratio_min) + "," +
                                           std::to_string(ratio_max) + "]");
    int box_side = std::max(box.width(), box.height());
    int win = (int)std::lround(box_side / ratio);
    win = std::clamp(win, box_side, std::min(h, w));
    int x0 = (box.x0 + box.x1 - win + 1) / 2;
    int y0 = (box.y0 + box.y1 - win + 1) / 2;
    x0 = std::clamp(x0, 0, w - win);
    y0 = std::clamp(y0, 0, h - win);
    CropTransform t{x0, y0, win, model_res, mode};
    Tensor window = crop(frame, x0, y0, win, win);
    return {resize(window, model_res, model_res, mode), t};
}

Tensor paste_back(const Tensor& source_frame, const Tensor& edited_model, const BBox& frame_box,
                  const CropTransform& t) {
    Tensor out = source_frame;
    BBox mbox = t.box_in_model(frame_box);
    Tensor region = crop(edited_model, mbox.x0, mbox.y0, mbox.width(), mbox.height());
    Tensor sized = resize(region, frame_box.height(), frame_box.width(), t.mode);
    blit(out, sized, frame_box.x0, frame_box.y0);
    return out;
}

MaskedSequence mask_sequence(const std::vector<Tensor>& frames,
                             const std::vector<Tensor>& object_masks,
                             SequenceBoxMode mode) {
    if (frames.empty() || frames.size() != object_masks.size())
        throw ValidationError("frames", "frame/mask count mismatch or empty sequence");
    int h = image_height(frames[0]), w = image_width(frames[0]);

    std::vector<BBox> boxes;
    boxes.reserve(frames.size());
    for (size_t i = 0; i < object_masks.size(); ++i) {
        try {
            boxes.push_back(squarify(bbox_from_mask(object_masks[i]), h, w));
        } catch (const EmptyMaskError&) {
            throw EmptyMaskError((int)i);
        }
    }

    BBox shared = boxes[0];
    if (mode == SequenceBoxMode::largest_area) {
        for (const auto& b : boxes)
            if (b.area() > shared.area())
                shared = b;
    } else {
        int x0 = boxes[0].x0, y0 = boxes[0].y0, x1 = boxes[0].x1, y1 = boxes[0].y1;
        for (const auto& b : boxes) {
            x0 = std::min(x0, b.x0);
            y0 = std::min(y0, b.y0);
            x1 = std::max(x1, b.x1);
            y1 = std::max(y1, b.y1);
        }
        shared = squarify(BBox{x0, y0, x1, y1}, h, w);
    }

    MaskedSequence out;
    out.box = shared;
    for (size_t i = 0; i < frames.size(); ++i) {
        out.frames.push_back(mask_frame(frames[i], shared));
        bool violated = false;
        for (int y = 0; y < h && !violated; ++y)
            for (int x = 0; x < w; ++x)
                if (object_masks[i].at(y, x) > 0.5 && !shared.contains(x, y)) {
                    violated = true;
                    break;
                }
        if (violated)
            out.coverage_violations.push_back((int)i);
    }
    return out;
}

}  // namespace objswap
