#pragma once

#include "objswap/corpus.hpp"
#include "objswap/tensor.hpp"

#include <string>
#include <vector>

namespace objswap {

enum class FlowBackend { oracle, block_matching };

const char* flow_backend_name(FlowBackend b);
FlowBackend flow_backend_from_name(const std::string& name);

struct BlockMatchParams {
    int window = 7;        // matching block side
    int pyramid_levels = 3;
    int search_radius = 2;  // per level, around the upsampled estimate
};

struct FlowResult {
    Tensor flow;  // [2,H,W]: plane 0 dx, plane 1 dy
    FlowBackend backend;
};

// Dense forward flow a -> b by coarse-to-fine block matching.
FlowResult estimate_flow(const Tensor& frame_a, const Tensor& frame_b,
                         const BlockMatchParams& params = {});

// Exact flows from generator metadata. Backward flow is the forward field
// splatted to its target positions (entity-aware, hand over object).
FlowResult oracle_flow_forward(const VideoClip& clip, int i);   // frame i -> i+1
FlowResult oracle_flow_backward(const VideoClip& clip, int i);  // frame i+1 -> i

// All adjacent-pair flows of a clip in both directions.
struct FlowProvider {
    std::vector<Tensor> forward;   // [i]: frame i -> i+1
    std::vector<Tensor> backward;  // [i]: frame i+1 -> i
    FlowBackend backend;
};

FlowProvider make_flow_provider(const VideoClip& clip, FlowBackend backend,
                                const BlockMatchParams& params = {});
// Estimator-only variant for frame sequences without generator metadata.
FlowProvider make_flow_provider(const std::vector<Tensor>& frames,
                                const BlockMatchParams& params = {});

}  // namespace objswap
