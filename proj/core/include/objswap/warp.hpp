#pragma once

#include "objswap/bbox.hpp"
#include "objswap/flow.hpp"
#include "objswap/image.hpp"
#include "objswap/masking.hpp"
#include "objswap/rng.hpp"

#include <vector>

namespace objswap {

struct SparsityLevel {
    double r = 50.0;  // percent of box pixels, [0,100]
    void validate() const;
};

struct TrackedPoint {
    double x = 0, y = 0;
    bool valid = false;
};

struct TrackedPoints {
    std::vector<std::pair<int, int>> origins;       // (x,y) in the anchor frame
    std::vector<std::vector<TrackedPoint>> tracks;  // [frame][point]
    std::vector<Rgb> colors;                        // sampled at origins
    int anchor_index = 0;
};

// Exactly round(r/100 * box_area) distinct pixels, uniform without
// replacement. The selection order is the write order downstream, and for a
// shared rng stream the first k picks of a larger draw equal a smaller draw.
std::vector<std::pair<int, int>> sample_points(const BBox& box, SparsityLevel r, Rng& rng);

// Chain points through per-pair flows: forward from the anchor with forward
// flow, backward with reverse-direction flow. Position update is
// p += flow(round(p)); a point becomes invalid once it leaves frame bounds.
TrackedPoints track_points(const std::vector<std::pair<int, int>>& origins,
                           const FlowProvider& flows, int anchor_index, int num_frames,
                           const Tensor& anchor_frame);

struct WarpedSequence {
    std::vector<Tensor> frames;
    int anchor_index = 0;
    TrackedPoints points;
};

// frames[anchor] is the conditioning frame bit-exact; other frames are the
// masked frames with valid tracked point colors written at their rounded
// positions inside the shared box (out-of-box writes are discarded,
// collisions last-writer-wins in origin order).
WarpedSequence warp_sequence(const MaskedSequence& masked, const Tensor& conditioning_frame,
                             int anchor_index, const TrackedPoints& points);

}  // namespace objswap
