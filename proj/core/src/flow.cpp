#include "objswap/flow.hpp"

#include "objswap/errors.hpp"
#include "objswap/image.hpp"

#include <algorithm>
#include <cmath>

namespace objswap {

const char* flow_backend_name(FlowBackend b) {
    return b == FlowBackend::oracle ? "oracle" : "block_matching";
}

FlowBackend flow_backend_from_name(const std::string& name) {
    if (name == "oracle")
        return FlowBackend::oracle;
    if (name == "block_matching")
        return FlowBackend::block_matching;
    throw ValidationError("flow_backend", "unknown backend '" + name + "'");
}

namespace {

Tensor downsample2(const Tensor& img) {
    int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    int oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = 0;
                int n = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        int yy = 2 * y + dy, xx = 2 * x + dx;
                        if (yy < h && xx < w) {
                            s += img.at(ch, yy, xx);
                            ++n;
                        }
                    }
                out.at(ch, y, x) = s / n;
            }
    return out;
}

double block_sad(const Tensor& a, const Tensor& b, int ax, int ay, int bx, int by, int half) {
    int c = a.shape[0], h = a.shape[1], w = a.shape[2];
    double sad = 0;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
            int ya = std::clamp(ay + dy, 0, h - 1), xa = std::clamp(ax + dx, 0, w - 1);
            int yb = std::clamp(by + dy, 0, h - 1), xb = std::clamp(bx + dx, 0, w - 1);
            for (int ch = 0; ch < c; ++ch)
                sad += std::fabs(a.at(ch, ya, xa) - b.at(ch, yb, xb));
        }
    return sad;
}

}  // namespace

FlowResult estimate_flow(const Tensor& frame_a, const Tensor& frame_b,
                         const BlockMatchParams& params) {
    if (!frame_a.same_shape(frame_b))
        throw ValidationError("frames", "size mismatch: " + frame_a.shape_str() + " vs " +
                                            frame_b.shape_str());
    std::vector<Tensor> pyr_a{frame_a}, pyr_b{frame_b};
    for (int l = 1; l < params.pyramid_levels; ++l) {
        if (image_height(pyr_a.back()) < 8 || image_width(pyr_a.back()) < 8)
            break;
        pyr_a.push_back(downsample2(pyr_a.back()));
        pyr_b.push_back(downsample2(pyr_b.back()));
    }

    int half = params.window / 2;
    Tensor flow;  // at current level
    for (int l = (int)pyr_a.size() - 1; l >= 0; --l) {
        const Tensor& a = pyr_a[(size_t)l];
        const Tensor& b = pyr_b[(size_t)l];
        int h = image_height(a), w = image_width(a);
        Tensor cur({2, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int ix = 0, iy = 0;
                if (flow.numel() > 0) {  // upsample previous level estimate
                    int py = std::min(y / 2, flow.shape[1] - 1);
                    int px = std::min(x / 2, flow.shape[2] - 1);
                    ix = (int)std::lround(flow.at(0, py, px) * 2.0);
                    iy = (int)std::lround(flow.at(1, py, px) * 2.0);
                }
                double best = block_sad(a, b, x, y, x + ix, y + iy, half);
                int bdx = ix, bdy = iy;
                for (int dy = -params.search_radius; dy <= params.search_radius; ++dy)
                    for (int dx = -params.search_radius; dx <= params.search_radius; ++dx) {
                        if (dx == 0 && dy == 0)
                            continue;
                        double sad = block_sad(a, b, x, y, x + ix + dx, y + iy + dy, half);
                        if (sad + 1e-12 < best) {
                            best = sad;
                            bdx = ix + dx;
                            bdy = iy + dy;
                        }
                    }
                cur.at(0, y, x) = bdx;
                cur.at(1, y, x) = bdy;
            }
        flow = std::move(cur);
    }
    return {std::move(flow), FlowBackend::block_matching};
}

FlowResult oracle_flow_forward(const VideoClip& clip, int i) {
    if (i < 0 || i + 1 >= clip.frame_count())
        throw ValidationError("frame_index", "flow pair out of range");
    return {clip.gt_flow[(size_t)i], FlowBackend::oracle};
}

FlowResult oracle_flow_backward(const VideoClip& clip, int i) {
    if (i < 0 || i + 1 >= clip.frame_count())
        throw ValidationError("frame_index", "flow pair out of range");
    int h = clip.height(), w = clip.width();
    const Tensor& fwd = clip.gt_flow[(size_t)i];
    Tensor bwd({2, h, w});
    // splat -flow to target positions; objects first, hand (foreground) wins
    auto splat = [&](const Tensor& mask) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (mask.at(y, x) <= 0.5)
                    continue;
                double dx = fwd.at(0, y, x), dy = fwd.at(1, y, x);
                int tx = (int)std::lround(x + dx), ty = (int)std::lround(y + dy);
                if (tx < 0 || tx >= w || ty < 0 || ty >= h)
                    continue;
                bwd.at(0, ty, tx) = -dx;
                bwd.at(1, ty, tx) = -dy;
            }
    };
    splat(clip.object_masks[(size_t)i]);
    splat(clip.hand_masks[(size_t)i]);
    return {std::move(bwd), FlowBackend::oracle};
}

FlowProvider make_flow_provider(const VideoClip& clip, FlowBackend backend,
                                const BlockMatchParams& params) {
    FlowProvider p;
    p.backend = backend;
    for (int i = 0; i + 1 < clip.frame_count(); ++i) {
        if (backend == FlowBackend::oracle) {
            p.forward.push_back(oracle_flow_forward(clip, i).flow);
            p.backward.push_back(oracle_flow_backward(clip, i).flow);
        } else {
            p.forward.push_back(estimate_flow(clip.frames[(size_t)i], clip.frames[(size_t)i + 1], params).flow);
            p.backward.push_back(estimate_flow(clip.frames[(size_t)i + 1], clip.frames[(size_t)i], params).flow);
        }
    }
    return p;
}

FlowProvider make_flow_provider(const std::vector<Tensor>& frames, const BlockMatchParams& params) {
    FlowProvider p;
    p.backend = FlowBackend::block_matching;
    for (size_t i = 0; i + 1 < frames.size(); ++i) {
        p.forward.push_back(estimate_flow(frames[i], frames[i + 1], params).flow);
        p.backward.push_back(estimate_flow(frames[i + 1], frames[i], params).flow);
    }
    return p;
}

}  // namespace objswap
