#pragma once

#include "objswap/tensor.hpp"

#include <string>

namespace objswap {

// Minimal 8-bit PNG codec (zlib-backed). Writes gray / RGB / RGBA from a
// [C,H,W] tensor in [0,1]; values are rounded to bytes. Reading supports
// non-interlaced 8-bit gray, gray+alpha, RGB and RGBA with any scanline
// filter. Enough for the dataset format and user-supplied reference images.
void write_png(const std::string& path, const Tensor& img);
Tensor read_png(const std::string& path);

}  // namespace objswap
