#pragma once

#include "objswap/tensor.hpp"

namespace objswap {

// Half-open pixel box [x0,x1) x [y0,y1); x is column, y is row.
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    int64_t area() const { return (int64_t)width() * height(); }
    bool is_square() const { return width() == height(); }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool operator==(const BBox&) const = default;

    void validate(int frame_h, int frame_w) const;  // throws ValidationError
};

// Tightest box containing all set pixels. Throws EmptyMaskError.
BBox bbox_from_mask(const Tensor& mask);

// Expand to a square of side max(w,h) centered on the input box, shifted
// (never shrunk) to stay inside the frame; side clamps to min(H,W).
BBox squarify(const BBox& box, int frame_h, int frame_w);

}  // namespace objswap
