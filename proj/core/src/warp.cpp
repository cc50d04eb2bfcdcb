#include "objswap/warp.hpp"

#include "objswap/errors.hpp"

#include <cmath>

namespace objswap {

void SparsityLevel::validate() const {
    if (!(r >= 0.0 && r <= 100.0))
        throw ValidationError("r", "sparsity must be in [0,100], got " + std::to_string(r));
}

std::vector<std::pair<int, int>> sample_points(const BBox& box, SparsityLevel r, Rng& rng) {
    r.validate();
    int64_t area = box.area();
    int64_t k = (int64_t)std::llround(r.r / 100.0 * (double)area);
    k = std::min(k, area);

    // partial Fisher-Yates over box pixels in row-major order
    std::vector<int32_t> idx((size_t)area);
    for (int64_t i = 0; i < area; ++i)
        idx[(size_t)i] = (int32_t)i;
    std::vector<std::pair<int, int>> out;
    out.reserve((size_t)k);
    for (int64_t j = 0; j < k; ++j) {
        int64_t pick = j + (int64_t)rng.uniform_index((uint64_t)(area - j));
        std::swap(idx[(size_t)j], idx[(size_t)pick]);
        int32_t v = idx[(size_t)j];
        out.emplace_back(box.x0 + (int)(v % box.width()), box.y0 + (int)(v / box.width()));
    }
    return out;
}

TrackedPoints track_points(const std::vector<std::pair<int, int>>& origins,
                           const FlowProvider& flows, int anchor_index, int num_frames,
                           const Tensor& anchor_frame) {
    if ((int)flows.forward.size() < num_frames - 1 || (int)flows.backward.size() < num_frames - 1)
        throw ValidationError("flows", "flow fields must cover all adjacent frame pairs");
    if (anchor_index < 0 || anchor_index >= num_frames)
        throw ValidationError("anchor_index", "outside [0, num_frames)");

    int h = image_height(anchor_frame), w = image_width(anchor_frame);
    TrackedPoints tp;
    tp.origins = origins;
    tp.anchor_index = anchor_index;
    tp.tracks.assign((size_t)num_frames, std::vector<TrackedPoint>(origins.size()));
    for (const auto& [x, y] : origins)
        tp.colors.push_back({anchor_frame.at(0, y, x), anchor_frame.at(1, y, x),
                             anchor_frame.at(2, y, x)});

    for (size_t p = 0; p < origins.size(); ++p) {
        tp.tracks[(size_t)anchor_index][p] = {(double)origins[p].first, (double)origins[p].second, true};

        // forward chaining
        double px = origins[p].first, py = origins[p].second;
        bool valid = true;
        for (int i = anchor_index; i + 1 < num_frames; ++i) {
            if (valid) {
                int lx = (int)std::lround(px), ly = (int)std::lround(py);
                const Tensor& f = flows.forward[(size_t)i];
                px += f.at(0, ly, lx);
                py += f.at(1, ly, lx);
                int nx = (int)std::lround(px), ny = (int)std::lround(py);
                if (nx < 0 || nx >= w || ny < 0 || ny >= h)
                    valid = false;
            }
            tp.tracks[(size_t)i + 1][p] = {px, py, valid};
        }

        // backward chaining
        px = origins[p].first;
        py = origins[p].second;
        valid = true;
        for (int i = anchor_index - 1; i >= 0; --i) {
            if (valid) {
                int lx = (int)std::lround(px), ly = (int)std::lround(py);
                const Tensor& f = flows.backward[(size_t)i];  // frame i+1 -> i
                px += f.at(0, ly, lx);
                py += f.at(1, ly, lx);
                int nx = (int)std::lround(px), ny = (int)std::lround(py);
                if (nx < 0 || nx >= w || ny < 0 || ny >= h)
                    valid = false;
            }
            tp.tracks[(size_t)i][p] = {px, py, valid};
        }
    }
    return tp;
}

WarpedSequence warp_sequence(const MaskedSequence& masked, const Tensor& conditioning_frame,
                             int anchor_index, const TrackedPoints& points) {
    int n = (int)masked.frames.size();
    if (anchor_index < 0 || anchor_index >= n)
        throw ValidationError("anchor_index", "outside the sequence");
    if (!masked.frames[0].same_shape(conditioning_frame))
        throw ValidationError("conditioning_frame", "size mismatch with masked frames");

    WarpedSequence out;
    out.anchor_index = anchor_index;
    out.points = points;
    for (int i = 0; i < n; ++i) {
        if (i == anchor_index) {
            out.frames.push_back(conditioning_frame);
            continue;
        }
        Tensor frame = masked.frames[(size_t)i];
        for (size_t p = 0; p < points.origins.size(); ++p) {
            const TrackedPoint& t = points.tracks[(size_t)i][p];
            if (!t.valid)
                continue;
            int x = (int)std::lround(t.x), y = (int)std::lround(t.y);
            if (!masked.box.contains(x, y))
                continue;
            frame.at(0, y, x) = points.colors[p].r;
            frame.at(1, y, x) = points.colors[p].g;
            frame.at(2, y, x) = points.colors[p].b;
        }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

}  // namespace objswap
