#pragma once

#include "objswap/tensor.hpp"

#include <array>

namespace objswap {

// Images are Tensor[C,H,W] with values in [0,1]; masks are Tensor[H,W] with
// values 0/1. Pixel coordinates are (x,y) = (column,row).

enum class Resample { nearest, bilinear };

struct Rgb {
    double r = 0, g = 0, b = 0;
};

Rgb hsv_to_rgb(double h, double s, double v);            // h,s,v in [0,1]
std::array<double, 3> rgb_to_hsv(double r, double g, double b);

int image_height(const Tensor& img);
int image_width(const Tensor& img);

Tensor make_image(int channels, int h, int w, double fill = 0.0);

// Resize a CHW image to (out_h, out_w).
Tensor resize(const Tensor& img, int out_h, int out_w, Resample mode);

// out-of-range reads clamp to the border.
double sample_bilinear(const Tensor& img, int c, double x, double y);

// dst[y0+..][x0+..] = src; src must fit.
void blit(Tensor& dst, const Tensor& src, int x0, int y0);

Tensor crop(const Tensor& img, int x0, int y0, int w, int h);

// Alpha-composite an RGBA foreground over an RGB image at (x0,y0).
void composite_rgba_over(Tensor& dst_rgb, const Tensor& src_rgba, int x0, int y0);

// Apply a 3x3 homography mapping OUTPUT pixel centers to INPUT coordinates
// (inverse mapping). Outside-input samples produce zeros.
Tensor warp_homography(const Tensor& img, const std::array<double, 9>& out_to_in,
                       int out_h, int out_w, Resample mode);

// Binary morphology on H,W masks with a square structuring element of the
// given radius (Chebyshev ball).
Tensor dilate(const Tensor& mask, int radius);
Tensor erode(const Tensor& mask, int radius);

bool masks_intersect(const Tensor& a, const Tensor& b);
int64_t mask_area(const Tensor& mask);

double psnr(const Tensor& a, const Tensor& b);  // peak = 1.0

}  // namespace objswap
