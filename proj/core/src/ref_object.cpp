#include "objswap/ref_object.hpp"

#include "objswap/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace objswap {

RefObjectImage extract_object(const Tensor& frame, const Tensor& object_mask) {
    BBox b = bbox_from_mask(object_mask);  // throws EmptyMaskError
    RefObjectImage out;
    out.rgba = Tensor({4, b.height(), b.width()});
    for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x) {
            if (object_mask.at(b.y0 + y, b.x0 + x) <= 0.5)
                continue;
            for (int c = 0; c < 3; ++c)
                out.rgba.at(c, y, x) = frame.at(c, b.y0 + y, b.x0 + x);
            out.rgba.at(3, y, x) = 1.0;
        }
    return out;
}

namespace {

// Best integer offset of the sprite relative to the object crop, by overlap
// count of the supports; ties prefer the smallest shift.
std::pair<int, int> align_sprite(const Tensor& obj_alpha_src, const Tensor& sprite) {
    int ah = obj_alpha_src.shape[1], aw = obj_alpha_src.shape[2];
    int sh = sprite.shape[1], sw = sprite.shape[2];
    int64_t best = -1;
    int bdx = 0, bdy = 0;
    long bcost = 1 << 30;
    for (int dy = -sh + 1; dy < ah; ++dy)
        for (int dx = -sw + 1; dx < aw; ++dx) {
            int64_t overlap = 0;
            for (int y = std::max(0, dy); y < std::min(ah, dy + sh); ++y)
                for (int x = std::max(0, dx); x < std::min(aw, dx + sw); ++x)
                    if (obj_alpha_src.at(3, y, x) > 0.5 && sprite.at(3, y - dy, x - dx) > 0.5)
                        ++overlap;
            long cost = std::labs(dy) + std::labs(dx);
            if (overlap > best || (overlap == best && cost < bcost)) {
                best = overlap;
                bdx = dx;
                bdy = dy;
                bcost = cost;
            }
        }
    return {bdx, bdy};
}

}  // namespace

RefObjectImage fill_occlusion_from_sprite(const RefObjectImage& obj, const Tensor* sprite_rgba) {
    if (sprite_rgba == nullptr || sprite_rgba->numel() == 0 || sprite_rgba->shape[0] != 4) {
        // morphological closing fallback: close the support, fill new pixels
        // with the nearest visible color
        RefObjectImage out = obj;
        int h = obj.rgba.shape[1], w = obj.rgba.shape[2];
        Tensor alpha({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                alpha.at(y, x) = obj.rgba.at(3, y, x) > 0.5 ? 1.0 : 0.0;
        Tensor closed = erode(dilate(alpha, 2), 2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (closed.at(y, x) < 0.5 || alpha.at(y, x) > 0.5)
                    continue;
                // nearest visible pixel by expanding rings
                double br = 0, bg = 0, bb = 0;
                bool found = false;
                for (int rad = 1; rad < std::max(h, w) && !found; ++rad)
                    for (int dy = -rad; dy <= rad && !found; ++dy)
                        for (int dx = -rad; dx <= rad; ++dx) {
                            int yy = y + dy, xx = x + dx;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= w)
                                continue;
                            if (alpha.at(yy, xx) > 0.5) {
                                br = obj.rgba.at(0, yy, xx);
                                bg = obj.rgba.at(1, yy, xx);
                                bb = obj.rgba.at(2, yy, xx);
                                found = true;
                                break;
                            }
                        }
                out.rgba.at(0, y, x) = br;
                out.rgba.at(1, y, x) = bg;
                out.rgba.at(2, y, x) = bb;
                out.rgba.at(3, y, x) = 1.0;
            }
        out.provenance.used_morphological_fill = true;
        return out;
    }

    const Tensor& sprite = *sprite_rgba;
    auto [dx, dy] = align_sprite(obj.rgba, sprite);
    int sh = sprite.shape[1], sw = sprite.shape[2];
    int ah = obj.rgba.shape[1], aw = obj.rgba.shape[2];

    RefObjectImage out;
    out.provenance = obj.provenance;
    out.rgba = Tensor({4, sh, sw});
    for (int y = 0; y < sh; ++y)
        for (int x = 0; x < sw; ++x) {
            if (sprite.at(3, y, x) <= 0.5)
                continue;
            int oy = y + dy, ox = x + dx;
            bool visible = oy >= 0 && oy < ah && ox >= 0 && ox < aw && obj.rgba.at(3, oy, ox) > 0.5;
            for (int c = 0; c < 3; ++c)
                out.rgba.at(c, y, x) = visible ? obj.rgba.at(c, oy, ox) : sprite.at(c, y, x);
            out.rgba.at(3, y, x) = 1.0;
        }
    return out;
}

RefObjectImage fill_occlusion(const RefObjectImage& obj, const VideoClip& clip) {
    const Tensor* sprite = clip.object_sprite.numel() > 0 ? &clip.object_sprite : nullptr;
    return fill_occlusion_from_sprite(obj, sprite);
}

namespace {

// Solve the 8x8 system mapping 4 source corners to 4 target corners (DLT).
std::array<double, 9> homography_from_corners(const std::array<double, 8>& src,
                                              const std::array<double, 8>& dst) {
    double A[8][9] = {};
    for (int i = 0; i < 4; ++i) {
        double sx = src[2 * i], sy = src[2 * i + 1];
        double dx = dst[2 * i], dy = dst[2 * i + 1];
        double* r0 = A[2 * i];
        double* r1 = A[2 * i + 1];
        r0[0] = sx; r0[1] = sy; r0[2] = 1;
        r0[6] = -dx * sx; r0[7] = -dx * sy; r0[8] = dx;
        r1[3] = sx; r1[4] = sy; r1[5] = 1;
        r1[6] = -dy * sx; r1[7] = -dy * sy; r1[8] = dy;
    }
    // gaussian elimination with partial pivoting on the augmented system
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col]))
                piv = r;
        std::swap(A[col], A[piv]);
        if (std::fabs(A[col][col]) < 1e-12)
            throw ValidationError("perspective", "degenerate corner configuration");
        for (int r = 0; r < 8; ++r) {
            if (r == col)
                continue;
            double f = A[r][col] / A[col][col];
            for (int c = col; c < 9; ++c)
                A[r][c] -= f * A[col][c];
        }
    }
    std::array<double, 9> h;
    for (int i = 0; i < 8; ++i)
        h[i] = A[i][8] / A[i][i];
    h[8] = 1.0;
    return h;
}

std::array<double, 9> invert3x3(const std::array<double, 9>& m) {
    double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7], i = m[8];
    double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
    if (std::fabs(det) < 1e-14)
        throw ValidationError("perspective", "singular homography");
    std::array<double, 9> r;
    r[0] = (e * i - f * h) / det;
    r[1] = (c * h - b * i) / det;
    r[2] = (b * f - c * e) / det;
    r[3] = (f * g - d * i) / det;
    r[4] = (a * i - c * g) / det;
    r[5] = (c * d - a * f) / det;
    r[6] = (d * h - e * g) / det;
    r[7] = (b * g - a * h) / det;
    r[8] = (a * e - b * d) / det;
    return r;
}

}  // namespace

RefObjectImage replay_augment(const RefObjectImage& obj, const AugmentParams& p) {
    int h = obj.rgba.shape[1], w = obj.rgba.shape[2];
    double side = std::max(h, w);

    // source corners, flipped horizontally if requested
    std::array<double, 8> src = {0, 0, (double)w - 1, 0, (double)w - 1, (double)h - 1, 0, (double)h - 1};
    if (p.flip)
        src = {(double)w - 1, 0, 0, 0, 0, (double)h - 1, (double)w - 1, (double)h - 1};

    // rotate + scale about the center, then jitter the corners
    double th = p.rotation_deg * 3.14159265358979323846 / 180.0;
    double cr = std::cos(th) * p.scale, sr = std::sin(th) * p.scale;
    double cx = (w - 1) * 0.5, cy = (h - 1) * 0.5;
    std::array<double, 8> dst;
    for (int i = 0; i < 4; ++i) {
        double x0 = (i == 1 || i == 2) ? (double)w - 1 : 0.0;
        double y0 = (i >= 2) ? (double)h - 1 : 0.0;
        double rx = cr * (x0 - cx) - sr * (y0 - cy);
        double ry = sr * (x0 - cx) + cr * (y0 - cy);
        dst[2 * i] = rx + p.corner_jitter[2 * i] * side;
        dst[2 * i + 1] = ry + p.corner_jitter[2 * i + 1] * side;
    }
    double min_x = dst[0], max_x = dst[0], min_y = dst[1], max_y = dst[1];
    for (int i = 1; i < 4; ++i) {
        min_x = std::min(min_x, dst[2 * i]);
        max_x = std::max(max_x, dst[2 * i]);
        min_y = std::min(min_y, dst[2 * i + 1]);
        max_y = std::max(max_y, dst[2 * i + 1]);
    }
    for (int i = 0; i < 4; ++i) {
        dst[2 * i] -= min_x;
        dst[2 * i + 1] -= min_y;
    }
    int out_w = std::max(1, (int)std::ceil(max_x - min_x) + 1);
    int out_h = std::max(1, (int)std::ceil(max_y - min_y) + 1);

    auto fwd = homography_from_corners(src, dst);
    auto inv = invert3x3(fwd);
    RefObjectImage out;
    out.rgba = warp_homography(obj.rgba, inv, out_h, out_w, p.mode);
    if (p.mode == Resample::nearest)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                out.rgba.at(3, y, x) = out.rgba.at(3, y, x) > 0.5 ? 1.0 : 0.0;
    out.provenance = obj.provenance;
    out.provenance.aug = p;
    out.provenance.augmented = true;
    return out;
}

RefObjectImage augment(const RefObjectImage& obj, Rng& rng, const AugmentConfig& cfg) {
    AugmentParams p;
    p.mode = cfg.mode;
    // Draw every gate and value in a fixed order so seeded streams replay.
    bool do_flip = rng.bernoulli(cfg.p_flip);
    bool do_rot = rng.bernoulli(cfg.p_rotation);
    double rot = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
    bool do_persp = rng.bernoulli(cfg.p_perspective);
    double jit[8];
    for (double& j : jit)
        j = rng.uniform(-cfg.perspective_jitter_max, cfg.perspective_jitter_max);
    bool do_resize = rng.bernoulli(cfg.p_resize);
    double sc = rng.uniform(cfg.scale_min, cfg.scale_max);

    p.flip = do_flip;
    p.rotation_deg = do_rot ? rot : 0.0;
    if (do_persp)
        for (int i = 0; i < 8; ++i)
            p.corner_jitter[i] = jit[i];
    p.scale = do_resize ? sc : 1.0;
    return replay_augment(obj, p);
}

int pick_alternate_frame(const VideoClip& clip, int frame_index, Rng& rng, bool allow_same_frame) {
    std::vector<int> candidates;
    for (int i = 0; i < clip.frame_count(); ++i)
        if (mask_area(clip.object_masks[i]) > 0)
            candidates.push_back(i);
    if (candidates.empty())
        throw EmptyMaskError();
    if (!allow_same_frame && candidates.size() > 1)
        std::erase(candidates, frame_index);
    return candidates[rng.uniform_index(candidates.size())];
}

namespace {

int64_t alpha_area(const Tensor& rgba) {
    int h = rgba.shape[1], w = rgba.shape[2];
    int64_t n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (rgba.at(3, y, x) > 0)
                ++n;
    return n;
}

}  // namespace

Tensor collage(const Tensor& masked_frame, const BBox& box, const RefObjectImage& obj,
               Resample mode, double fit_factor) {
    box.validate(image_height(masked_frame), image_width(masked_frame));
    Tensor out = masked_frame;
    int oh = obj.rgba.shape[1], ow = obj.rgba.shape[2];
    if (alpha_area(obj.rgba) == 0)
        return out;
    int side = std::min(box.width(), box.height());
    double target = fit_factor * side;
    double s = target / std::max(oh, ow);
    int nh = std::max(1, (int)std::lround(oh * s));
    int nw = std::max(1, (int)std::lround(ow * s));
    Tensor scaled = resize(obj.rgba, nh, nw, mode);
    if (mode == Resample::nearest)
        for (int y = 0; y < nh; ++y)
            for (int x = 0; x < nw; ++x)
                scaled.at(3, y, x) = scaled.at(3, y, x) > 0.5 ? 1.0 : 0.0;
    int x0 = box.x0 + (box.width() - nw) / 2;
    int y0 = box.y0 + (box.height() - nh) / 2;
    // clip writes to the box
    for (int y = 0; y < nh; ++y) {
        int fy = y0 + y;
        if (fy < box.y0 || fy >= box.y1)
            continue;
        for (int x = 0; x < nw; ++x) {
            int fx = x0 + x;
            if (fx < box.x0 || fx >= box.x1)
                continue;
            double a = scaled.at(3, y, x);
            if (a <= 0)
                continue;
            for (int c = 0; c < 3; ++c)
                out.at(c, fy, fx) = a * scaled.at(c, y, x) + (1 - a) * out.at(c, fy, fx);
        }
    }
    return out;
}

}  // namespace objswap
