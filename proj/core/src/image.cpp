#include "objswap/image.hpp"

#include "objswap/errors.hpp"

#include <algorithm>
#include <cmath>

namespace objswap {

Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);  // wrap hue
    double c = v * s;
    double hp = h * 6.0;
    double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) {
        r = c; g = x;
    } else if (hp < 2) {
        r = x; g = c;
    } else if (hp < 3) {
        g = c; b = x;
    } else if (hp < 4) {
        g = x; b = c;
    } else if (hp < 5) {
        r = x; b = c;
    } else {
        r = c; b = x;
    }
    double m = v - c;
    return {r + m, g + m, b + m};
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
    double mx = std::max({r, g, b});
    double mn = std::min({r, g, b});
    double d = mx - mn;
    double h = 0.0;
    if (d > 0) {
        if (mx == r)
            h = std::fmod((g - b) / d, 6.0);
        else if (mx == g)
            h = (b - r) / d + 2.0;
        else
            h = (r - g) / d + 4.0;
        h /= 6.0;
        if (h < 0)
            h += 1.0;
    }
    double s = mx > 0 ? d / mx : 0.0;
    return {h, s, mx};
}

int image_height(const Tensor& img) {
    return img.shape[img.ndim() - 2];
}
int image_width(const Tensor& img) {
    return img.shape[img.ndim() - 1];
}

Tensor make_image(int channels, int h, int w, double fill_v) {
    Tensor t({channels, h, w});
    if (fill_v != 0.0)
        t.fill(fill_v);
    return t;
}

static double clampd(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

double sample_bilinear(const Tensor& img, int c, double x, double y) {
    int h = image_height(img), w = image_width(img);
    x = clampd(x, 0.0, w - 1.0);
    y = clampd(y, 0.0, h - 1.0);
    int x0 = (int)std::floor(x), y0 = (int)std::floor(y);
    int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    double fx = x - x0, fy = y - y0;
    double v00 = img.at(c, y0, x0), v01 = img.at(c, y0, x1);
    double v10 = img.at(c, y1, x0), v11 = img.at(c, y1, x1);
    return v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy) + v10 * (1 - fx) * fy + v11 * fx * fy;
}

Tensor resize(const Tensor& img, int out_h, int out_w, Resample mode) {
    int c = img.shape[0], h = image_height(img), w = image_width(img);
    Tensor out({c, out_h, out_w});
    double sx = (double)w / out_w, sy = (double)h / out_h;
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double ix = (ox + 0.5) * sx - 0.5;
                double iy = (oy + 0.5) * sy - 0.5;
                double v;
                if (mode == Resample::nearest) {
                    int nx = (int)clampd(std::floor(ix + 0.5), 0, w - 1);
                    int ny = (int)clampd(std::floor(iy + 0.5), 0, h - 1);
                    v = img.at(ch, ny, nx);
                } else {
                    v = sample_bilinear(img, ch, ix, iy);
                }
                out.at(ch, oy, ox) = v;
            }
        }
    }
    return out;
}

void blit(Tensor& dst, const Tensor& src, int x0, int y0) {
    int c = src.shape[0], h = image_height(src), w = image_width(src);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                dst.at(ch, y0 + y, x0 + x) = src.at(ch, y, x);
}

Tensor crop(const Tensor& img, int x0, int y0, int w, int h) {
    int c = img.shape[0];
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(ch, y, x) = img.at(ch, y0 + y, x0 + x);
    return out;
}

void composite_rgba_over(Tensor& dst_rgb, const Tensor& src_rgba, int x0, int y0) {
    int h = image_height(src_rgba), w = image_width(src_rgba);
    int dh = image_height(dst_rgb), dw = image_width(dst_rgb);
    for (int y = 0; y < h; ++y) {
        int dy = y0 + y;
        if (dy < 0 || dy >= dh)
            continue;
        for (int x = 0; x < w; ++x) {
            int dx = x0 + x;
            if (dx < 0 || dx >= dw)
                continue;
            double a = src_rgba.at(3, y, x);
            if (a <= 0)
                continue;
            for (int ch = 0; ch < 3; ++ch)
                dst_rgb.at(ch, dy, dx) = a * src_rgba.at(ch, y, x) + (1 - a) * dst_rgb.at(ch, dy, dx);
        }
    }
}

Tensor warp_homography(const Tensor& img, const std::array<double, 9>& m,
                       int out_h, int out_w, Resample mode) {
    int c = img.shape[0], h = image_height(img), w = image_width(img);
    Tensor out({c, out_h, out_w});
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            double zi = m[6] * ox + m[7] * oy + m[8];
            if (std::fabs(zi) < 1e-12)
                continue;
            double ix = (m[0] * ox + m[1] * oy + m[2]) / zi;
            double iy = (m[3] * ox + m[4] * oy + m[5]) / zi;
            if (mode == Resample::nearest) {
                int nx = (int)std::floor(ix + 0.5), ny = (int)std::floor(iy + 0.5);
                if (nx < 0 || nx >= w || ny < 0 || ny >= h)
                    continue;
                for (int ch = 0; ch < c; ++ch)
                    out.at(ch, oy, ox) = img.at(ch, ny, nx);
            } else {
                if (ix < -1 || ix > w || iy < -1 || iy > h)
                    continue;
                for (int ch = 0; ch < c; ++ch)
                    out.at(ch, oy, ox) = sample_bilinear(img, ch, ix, iy);
            }
        }
    }
    return out;
}

Tensor dilate(const Tensor& mask, int radius) {
    int h = mask.shape[0], w = mask.shape[1];
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0;
            for (int dy = -radius; dy <= radius && v == 0; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < h && xx >= 0 && xx < w && mask.at(yy, xx) > 0.5) {
                        v = 1;
                        break;
                    }
                }
            out.at(y, x) = v;
        }
    return out;
}

Tensor erode(const Tensor& mask, int radius) {
    int h = mask.shape[0], w = mask.shape[1];
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 1;
            for (int dy = -radius; dy <= radius && v == 1; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w || mask.at(yy, xx) < 0.5) {
                        v = 0;
                        break;
                    }
                }
            out.at(y, x) = v;
        }
    return out;
}

bool masks_intersect(const Tensor& a, const Tensor& b) {
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] > 0.5 && b[i] > 0.5)
            return true;
    return false;
}

int64_t mask_area(const Tensor& mask) {
    int64_t n = 0;
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask[i] > 0.5)
            ++n;
    return n;
}

double psnr(const Tensor& a, const Tensor& b) {
    double m = mse(a, b);
    if (m <= 0)
        return 99.0;
    return 10.0 * std::log10(1.0 / m);
}

}  // namespace objswap
