#include "objswap/bbox.hpp"

#include "objswap/errors.hpp"

#include <algorithm>
#include <string>

namespace objswap {

void BBox::validate(int frame_h, int frame_w) const {
    if (!(0 <= x0 && x0 < x1 && x1 <= frame_w))
        throw ValidationError("box.x", "invalid x range [" + std::to_string(x0) + "," +
                                           std::to_string(x1) + ") for width " + std::to_string(frame_w));
    if (!(0 <= y0 && y0 < y1 && y1 <= frame_h))
        throw ValidationError("box.y", "invalid y range [" + std::to_string(y0) + "," +
                                           std::to_string(y1) + ") for height " + std::to_string(frame_h));
}

BBox bbox_from_mask(const Tensor& mask) {
    int h = mask.shape[0], w = mask.shape[1];
    int min_x = w, min_y = h, max_x = -1, max_y = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(y, x) > 0.5) {
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
    if (max_x < 0)
        throw EmptyMaskError();
    return {min_x, min_y, max_x + 1, max_y + 1};
}

BBox squarify(const BBox& box, int frame_h, int frame_w) {
    box.validate(frame_h, frame_w);
    int side = std::max(box.width(), box.height());
    side = std::min(side, std::min(frame_h, frame_w));
    // Center on the input box; integer division keeps already-square boxes fixed.
    int x0 = (box.x0 + box.x1 - side + 1) / 2;
    int y0 = (box.y0 + box.y1 - side + 1) / 2;
    x0 = std::clamp(x0, 0, frame_w - side);
    y0 = std::clamp(y0, 0, frame_h - side);
    return {x0, y0, x0 + side, y0 + side};
}

}  // namespace objswap
