#include "objswap/config.hpp"
#include "objswap/corpus.hpp"
#include "objswap/errors.hpp"
#include "objswap/pipeline.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace objswap;

namespace {

SceneSpec contact_spec(uint64_t seed, int grasp, int n = 8) {
    SceneSpec s;
    s.object_shape = ObjectShape::mug;
    s.object_color = hsv_to_rgb(0.12, 0.8, 0.8);
    s.grasp_frame = grasp;
    s.frame_h = 64;
    s.frame_w = 64;
    s.num_frames = n;
    s.rng_seed = seed;
    for (int i = 0; i < n; ++i)
        s.trajectory.emplace_back(30 + std::max(0, i - grasp), 30);
    return s;
}

}  // namespace

TEST_CASE("select_edit_frame: rule-defined candidates and fallback") {
    VideoClip clip = generate_clip(contact_spec(3, 2, 4));
    MaskedSequence ms = mask_sequence(clip.frames, clip.object_masks);
    Rng rng(1);
    bool warned = false;
    for (int k = 0; k < 50; ++k) {
        int pick = select_edit_frame(clip.frames, ms.box, rng, &warned);
        CHECK(!warned);
        CHECK(pick >= 2);
        CHECK(pick <= 3);
    }

    // uniform over contact frames across seeded runs
    VideoClip clip8 = generate_clip(contact_spec(5, 5, 8));
    MaskedSequence ms8 = mask_sequence(clip8.frames, clip8.object_masks);
    std::vector<int> counts(8, 0);
    Rng rng2(2);
    const int runs = 1000;
    for (int k = 0; k < runs; ++k)
        counts[(size_t)select_edit_frame(clip8.frames, ms8.box, rng2)]++;
    for (int i = 0; i < 5; ++i)
        CHECK(counts[(size_t)i] == 0);
    double p = 1.0 / 3.0;
    for (int i = 5; i < 8; ++i)
        CHECK(std::fabs(counts[(size_t)i] - runs * p) <= 3.0 * std::sqrt(runs * p * (1 - p)));

    // no-contact frames: middle index with the warning flag
    std::vector<Tensor> plain(6, Tensor({3, 32, 32}));
    Rng rng3(3);
    bool warn2 = false;
    int mid = select_edit_frame(plain, BBox{8, 8, 24, 24}, rng3, &warn2);
    CHECK(warn2);
    CHECK(mid == 3);
}

TEST_CASE("estimate_object_mask covers the object and excludes the hand") {
    VideoClip clip = generate_clip(contact_spec(7, 2, 6));
    Tensor est = estimate_object_mask(clip.frames[4]);
    // every visible object pixel is covered (estimation dilates by 1)
    for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x) {
            if (clip.object_masks[4].at(y, x) > 0.5)
                CHECK(est.at(y, x) == 1.0);
        }
    // the hand's interior must not appear (allow the 1px dilation ring)
    Tensor hand_interior = erode(clip.hand_masks[4], 2);
    for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x)
            if (hand_interior.at(y, x) > 0.5)
                CHECK(est.at(y, x) == 0.0);
}

TEST_CASE("missing checkpoints produce an actionable error naming the train command") {
    try {
        Models::load("/nonexistent/codec.oswp", "/nonexistent/s1.oswp", "/nonexistent/s2.oswp");
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        std::string msg = e.what();
        CHECK(msg.find("objswap train") != std::string::npos);
    }
}

TEST_CASE("sparsity outside [0,100] is rejected up front") {
    CHECK_THROWS_AS(SparsityLevel{150.0}.validate(), ValidationError);
    CHECK_THROWS_AS(SparsityLevel{-1.0}.validate(), ValidationError);
    SparsityLevel{0.0}.validate();
    SparsityLevel{100.0}.validate();
}

TEST_CASE("frame_grid assembles rows with padding") {
    std::vector<Tensor> row1(3, make_image(3, 8, 8, 0.2));
    std::vector<Tensor> row2(2, make_image(3, 8, 8, 0.8));
    Tensor grid = frame_grid({row1, row2}, 2);
    CHECK(grid.shape[0] == 3);
    CHECK(grid.shape[1] == 2 * (8 + 2) + 2);
    CHECK(grid.shape[2] == 3 * (8 + 2) + 2);
    CHECK(grid.at(0, 2, 2) == 0.2);
    CHECK(grid.at(0, 12, 2) == 0.8);
}

TEST_CASE("run config: strict keys, presets, provenance") {
    RunConfig desk = RunConfig::defaults();
    CHECK(desk.stage1.lr == 1e-4);
    CHECK(desk.stage1.cfg_dropout == 0.2);
    CHECK(desk.pipeline.r == 50.0);

    // paper preset echoes the published scale
    RunConfig paper = RunConfig::defaults("paper");
    CHECK(paper.stage1.steps == 25000);
    CHECK(paper.stage1.lr == 1e-4);
    CHECK(paper.stage1.batch_size == 8);
    CHECK(paper.stage1.model_res == 512);
    CHECK(paper.stage2.steps == 50000);
    CHECK(paper.stage2.lr == 1e-5);
    CHECK(paper.stage2.batch_size == 1);
    CHECK(paper.stage2.num_frames == 14);
    CHECK(paper.stage2.model_res == 256);

    // unknown keys rejected with the dotted path
    nlohmann::json bad = {{"stage1", {{"learning_rate", 0.1}}}};
    try {
        RunConfig::from_json(bad);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("stage1.learning_rate") != std::string::npos);
    }
    nlohmann::json bad2 = {{"not_a_section", 1}};
    CHECK_THROWS_AS(RunConfig::from_json(bad2), ValidationError);

    // overrides apply on top of the preset
    nlohmann::json ok = {{"preset", "paper"}, {"stage2", {{"steps", 123}}}};
    RunConfig merged = RunConfig::from_json(ok);
    CHECK(merged.stage2.steps == 123);
    CHECK(merged.stage2.lr == 1e-5);  // preset value survives

    // provenance map tags paper-derived defaults
    nlohmann::json resolved = desk.resolved_with_provenance();
    CHECK(resolved["_provenance"]["stage1.cfg_dropout"] == "paper");
    CHECK(resolved["_provenance"]["pipeline.r"] == "paper");
    CHECK(resolved["_provenance"]["stage2.lr"] == "desk");

    // resolved config round-trips through from_json (ignoring _provenance)
    nlohmann::json plain = desk.to_json();
    RunConfig back = RunConfig::from_json(plain);
    CHECK(back.to_json() == plain);
}
