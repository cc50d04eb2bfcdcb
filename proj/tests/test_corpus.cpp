#include "objswap/corpus.hpp"
#include "objswap/errors.hpp"
#include "objswap/png_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace objswap;
namespace fs = std::filesystem;

namespace {

SceneSpec base_spec(int num_frames = 8, int grasp = 3) {
    SceneSpec s;
    s.object_shape = ObjectShape::disk;
    s.object_color = hsv_to_rgb(0.08, 0.8, 0.8);
    s.grasp_frame = grasp;
    s.frame_h = 64;
    s.frame_w = 64;
    s.num_frames = num_frames;
    s.rng_seed = 99;
    for (int i = 0; i < num_frames; ++i)
        s.trajectory.emplace_back(30, 30);
    return s;
}

std::pair<double, double> mask_centroid(const Tensor& m) {
    double sx = 0, sy = 0, n = 0;
    for (int y = 0; y < m.shape[0]; ++y)
        for (int x = 0; x < m.shape[1]; ++x)
            if (m.at(y, x) > 0.5) {
                sx += x;
                sy += y;
                n += 1;
            }
    return {sx / n, sy / n};
}

}  // namespace

TEST_CASE("contact flags start exactly at grasp_frame") {
    VideoClip clip = generate_clip(base_spec(8, 3));
    std::vector<bool> expect = {false, false, false, true, true, true, true, true};
    CHECK(clip.contact_flags == expect);

    // flags recomputable from masks
    for (int i = 0; i < clip.frame_count(); ++i)
        CHECK(clip.contact_flags[(size_t)i] ==
              masks_in_contact(clip.hand_masks[(size_t)i], clip.object_masks[(size_t)i]));
}

TEST_CASE("static trajectory gives zero flow on object pixels") {
    VideoClip clip = generate_clip(base_spec(8, 6));
    for (int i = 0; i + 1 < 6; ++i)  // pre-grasp pairs: object static
        for (int y = 0; y < clip.height(); ++y)
            for (int x = 0; x < clip.width(); ++x)
                if (clip.object_masks[(size_t)i].at(y, x) > 0.5) {
                    CHECK(clip.gt_flow[(size_t)i].at(0, y, x) == 0.0);
                    CHECK(clip.gt_flow[(size_t)i].at(1, y, x) == 0.0);
                }
}

TEST_CASE("constant (+2,0) motion: exact flow, centroid oracle, pixel transport") {
    SceneSpec s = base_spec(6, 0);
    s.trajectory.clear();
    for (int i = 0; i < 6; ++i)
        s.trajectory.emplace_back(22 + 2 * i, 30);
    VideoClip clip = generate_clip(s);

    for (int i = 0; i + 1 < 6; ++i) {
        // exact flow at every object pixel
        for (int y = 0; y < clip.height(); ++y)
            for (int x = 0; x < clip.width(); ++x)
                if (clip.object_masks[(size_t)i].at(y, x) > 0.5) {
                    CHECK(clip.gt_flow[(size_t)i].at(0, y, x) == 2.0);
                    CHECK(clip.gt_flow[(size_t)i].at(1, y, x) == 0.0);
                }
        // centroid displacement oracle (hand occludes symmetric-ish parts, so
        // allow a small tolerance)
        auto [cx0, cy0] = mask_centroid(clip.object_masks[(size_t)i]);
        auto [cx1, cy1] = mask_centroid(clip.object_masks[(size_t)i + 1]);
        CHECK(cx1 - cx0 == doctest::Approx(2.0).epsilon(0.25));
        CHECK(cy1 - cy0 == doctest::Approx(0.0).scale(1.0).epsilon(0.25));
    }

    // applying gt_flow to frame i object pixels reproduces frame i+1 pixels
    for (int i = 0; i + 1 < 6; ++i)
        for (int y = 0; y < clip.height(); ++y)
            for (int x = 0; x < clip.width(); ++x)
                if (clip.object_masks[(size_t)i].at(y, x) > 0.5) {
                    int nx = x + (int)clip.gt_flow[(size_t)i].at(0, y, x);
                    int ny = y + (int)clip.gt_flow[(size_t)i].at(1, y, x);
                    bool target_obj = clip.object_masks[(size_t)i + 1].at(ny, nx) > 0.5;
                    bool target_hand = clip.hand_masks[(size_t)i + 1].at(ny, nx) > 0.5;
                    CHECK((target_obj || target_hand));  // may become occluded
                    if (target_obj)
                        for (int c = 0; c < 3; ++c)
                            CHECK(clip.frames[(size_t)i + 1].at(c, ny, nx) ==
                                  clip.frames[(size_t)i].at(c, y, x));
                }
}

TEST_CASE("masks are recomputable from rendered pixels") {
    VideoClip clip = generate_clip(base_spec());
    const Rgb oc = clip.metadata.object_color;
    for (int i = 0; i < clip.frame_count(); ++i) {
        const Tensor& f = clip.frames[(size_t)i];
        for (int y = 0; y < clip.height(); ++y)
            for (int x = 0; x < clip.width(); ++x) {
                bool is_color = f.at(0, y, x) == oc.r && f.at(1, y, x) == oc.g && f.at(2, y, x) == oc.b;
                CHECK(is_color == (clip.object_masks[(size_t)i].at(y, x) > 0.5));
                auto hsv = rgb_to_hsv(f.at(0, y, x), f.at(1, y, x), f.at(2, y, x));
                bool in_band = hsv[0] >= kHandHueLo && hsv[0] <= kHandHueHi && hsv[1] >= 0.5;
                CHECK(in_band == (clip.hand_masks[(size_t)i].at(y, x) > 0.5));
            }
    }
    // the sprite has no hand pixels and full object support
    CHECK(clip.object_sprite.shape[0] == 4);
    int64_t support = 0;
    for (int y = 0; y < clip.object_sprite.shape[1]; ++y)
        for (int x = 0; x < clip.object_sprite.shape[2]; ++x)
            if (clip.object_sprite.at(3, y, x) > 0.5)
                ++support;
    CHECK(support > 0);
    CHECK(support >= mask_area(clip.object_masks[0]));  // occlusion only removes
}

TEST_CASE("spec validation names the offending field") {
    SceneSpec s = base_spec();
    s.num_frames = 1;
    s.trajectory.resize(1);
    try {
        generate_clip(s);
        FAIL("expected error");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "num_frames");
    }

    s = base_spec();
    s.grasp_frame = 8;
    CHECK_THROWS_AS(generate_clip(s), ValidationError);

    s = base_spec();
    s.trajectory.pop_back();
    try {
        generate_clip(s);
        FAIL("expected error");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "trajectory");
    }

    s = base_spec();
    s.trajectory[2] = {200, 30};
    CHECK_THROWS_AS(generate_clip(s), ValidationError);
}

TEST_CASE("all shapes render and occlusion exists at contact") {
    for (ObjectShape shape : {ObjectShape::disk, ObjectShape::square, ObjectShape::mug,
                              ObjectShape::bottle, ObjectShape::kettle}) {
        SceneSpec s = base_spec(4, 1);
        s.object_shape = shape;
        s.rng_seed = 1000 + (int)shape;
        VideoClip clip = generate_clip(s);
        CHECK(mask_area(clip.object_masks[0]) > 20);
        // fingers occlude part of the object at contact frames
        int64_t pre = mask_area(clip.object_masks[0]);
        int64_t post = mask_area(clip.object_masks[2]);
        CHECK(post < pre);
    }
}

TEST_CASE("generate_corpus: determinism, split, index") {
    fs::path tmp = fs::temp_directory_path() / "objswap_corpus_test";
    fs::remove_all(tmp);
    CorpusConfig cfg;
    cfg.num_clips = 12;
    cfg.seed = 7;
    cfg.eval_fraction = 0.25;

    generate_corpus(cfg, (tmp / "a").string());
    generate_corpus(cfg, (tmp / "b").string());

    // byte-identical directories
    std::vector<fs::path> files_a;
    for (auto& e : fs::recursive_directory_iterator(tmp / "a"))
        if (e.is_regular_file())
            files_a.push_back(fs::relative(e.path(), tmp / "a"));
    std::sort(files_a.begin(), files_a.end());
    CHECK(!files_a.empty());
    for (const auto& rel : files_a) {
        std::ifstream fa(tmp / "a" / rel, std::ios::binary);
        std::ifstream fb(tmp / "b" / rel, std::ios::binary);
        REQUIRE(fb.good());
        std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        CHECK(da == db);
    }

    // refuse to overwrite without the flag
    CHECK_THROWS_AS(generate_corpus(cfg, (tmp / "a").string()), ValidationError);
    CorpusConfig cfg2 = cfg;
    cfg2.overwrite = true;
    generate_corpus(cfg2, (tmp / "a").string());

    // index lists exactly num_clips entries; splits by instance are disjoint
    DatasetIndex index = load_index((tmp / "a").string());
    CHECK((int)index.clips.size() == cfg.num_clips);
    std::set<int> train_inst, eval_inst;
    for (const auto& e : index.clips)
        (e.split == "train" ? train_inst : eval_inst).insert(e.instance_id);
    for (int id : eval_inst)
        CHECK(!train_inst.count(id));
    CHECK(!train_inst.empty());

    // clip round-trip through the on-disk format
    VideoClip clip = load_clip(clip_dir_for((tmp / "a").string(), index.clips[0].id));
    CHECK(clip.frame_count() == cfg.num_frames);
    CHECK((int)clip.gt_flow.size() == cfg.num_frames - 1);
    CHECK(clip.object_sprite.shape[0] == 4);
    CHECK(clip.split == index.clips[0].split);

    // flow files: float32 LE interleaved pairs survive the round trip
    Tensor flow = clip.gt_flow[0];
    fs::path fp = tmp / "flow_check.bin";
    write_flow_file(fp.string(), flow);
    Tensor back = read_flow_file(fp.string(), clip.height(), clip.width());
    CHECK(mse(back, flow) == 0.0);

    fs::remove_all(tmp);
}
