#pragma once

#include "objswap/codec.hpp"
#include "objswap/corpus.hpp"
#include "objswap/stage1.hpp"
#include "objswap/stage2.hpp"

#include <json.hpp>

#include <string>

namespace objswap {

// Nested run configuration. Every default carries a provenance tag (training
// recipe value vs desk-scale choice); unknown keys are rejected so typos fail
// loudly. The resolved config (with provenance) is serialized next to every
// output.
struct RunConfig {
    CorpusConfig corpus;
    CodecConfig codec;
    Stage1Config stage1;
    Stage2Config stage2;
    OneStageConfig one_stage;

    struct Pipeline {
        double r = 50.0;             // recipe default
        double guidance_scale = 3.0;
        std::string flow_backend = "oracle";
        std::string box_source = "ground_truth";
        double stage1_ratio = 0.45;
        uint64_t seed = 1;
    } pipeline;

    struct Metrics {
        double smoothness_scale = 0.25;
        double hue_lo = 0.55, hue_hi = 0.65, sat_min = 0.5;
        int dilation_radius = 2;
    } metrics;

    struct Paths {
        std::string data;
        std::string codec_ckpt, stage1_ckpt, stage2_ckpt, one_stage_ckpt;
    } paths;

    // preset "desk" (default) or "paper": the paper preset echoes the
    // published training scale (512x512 / 25K steps stage 1, 14x256x256 /
    // 50K steps stage 2, lr 1e-4 / 1e-5) for config-echo purposes.
    std::string preset = "desk";

    static RunConfig defaults(const std::string& preset = "desk");
    static RunConfig load(const std::string& path);            // file, strict keys
    static RunConfig from_json(const nlohmann::json& j);       // strict keys
    nlohmann::json to_json() const;
    nlohmann::json resolved_with_provenance() const;  // values + _provenance map
    void save_resolved(const std::string& path) const;
};

}  // namespace objswap
