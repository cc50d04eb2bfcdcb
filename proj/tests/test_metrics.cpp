#include "objswap/corpus.hpp"
#include "objswap/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <filesystem>
#include <sstream>

using namespace objswap;

namespace {

Tensor flat_frame(int h, int w, Rgb color) {
    Tensor f({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            f.at(0, y, x) = color.r;
            f.at(1, y, x) = color.g;
            f.at(2, y, x) = color.b;
        }
    return f;
}

void paint_rect(Tensor& f, const BBox& b, Rgb color) {
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) {
            f.at(0, y, x) = color.r;
            f.at(1, y, x) = color.g;
            f.at(2, y, x) = color.b;
        }
}

Rgb hand_color() { return hsv_to_rgb(0.6, 0.8, 0.8); }
Rgb bg_color() { return hsv_to_rgb(0.1, 0.1, 0.5); }

SceneSpec contact_spec(uint64_t seed) {
    SceneSpec s;
    s.object_shape = ObjectShape::disk;
    s.object_color = hsv_to_rgb(0.1, 0.8, 0.8);
    s.grasp_frame = 2;
    s.frame_h = 64;
    s.frame_w = 64;
    s.num_frames = 6;
    s.rng_seed = seed;
    for (int i = 0; i < 6; ++i)
        s.trajectory.emplace_back(30 + std::max(0, i - 2), 30);
    return s;
}

}  // namespace

TEST_CASE("detect_hand: empty, clean, speckled") {
    BBox eval_box{20, 20, 40, 40};

    Tensor none = flat_frame(32, 32, bg_color());
    HandDetection d0 = detect_hand(none, BBox{4, 4, 12, 12});
    CHECK(!d0.hand_box.has_value());
    CHECK(d0.in_contact == false);
    CHECK(d0.confidence == 0.0);

    // clean single gripper from the generator: confidence exactly 1
    VideoClip clip = generate_clip(contact_spec(3));
    BBox obj_box = bbox_from_mask(clip.object_masks[4]);
    HandDetection d1 = detect_hand(clip.frames[4], obj_box);
    CHECK(d1.hand_box.has_value());
    CHECK(d1.confidence == 1.0);
    CHECK(d1.in_contact == true);

    // pre-contact frame: hand present, not in contact
    HandDetection d2 = detect_hand(clip.frames[0], bbox_from_mask(clip.object_masks[0]));
    CHECK(d2.hand_box.has_value());
    CHECK(d2.in_contact == false);

    // 90-pixel blob + 10 isolated speckles: confidence 0.9 by construction
    Tensor speckled = flat_frame(64, 64, bg_color());
    paint_rect(speckled, BBox{5, 5, 14, 15}, hand_color());  // 9x10 = 90 px
    int placed = 0;
    for (int y = 30; y < 64 && placed < 10; y += 4)
        for (int x = 30; x < 64 && placed < 10; x += 4) {
            paint_rect(speckled, BBox{x, y, x + 1, y + 1}, hand_color());
            ++placed;
        }
    HandDetection d3 = detect_hand(speckled, eval_box);
    CHECK(d3.confidence == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("detect_hand is invariant to object recoloring outside the hue band") {
    VideoClip clip = generate_clip(contact_spec(9));
    BBox obj_box = bbox_from_mask(clip.object_masks[4]);
    HandDetection before = detect_hand(clip.frames[4], obj_box);

    Tensor recolored = clip.frames[4];
    Rgb nc = hsv_to_rgb(0.95, 0.9, 0.7);
    for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x)
            if (clip.object_masks[4].at(y, x) > 0.5) {
                recolored.at(0, y, x) = nc.r;
                recolored.at(1, y, x) = nc.g;
                recolored.at(2, y, x) = nc.b;
            }
    HandDetection after = detect_hand(recolored, obj_box);
    CHECK(before.hand_box == after.hand_box);
    CHECK(before.confidence == after.confidence);
    CHECK(before.in_contact == after.in_contact);
}

TEST_CASE("contact agreement: identity, fraction, brute-force oracle") {
    VideoClip clip = generate_clip(contact_spec(5));
    BBox box = bbox_from_mask(clip.object_masks[0]);
    CHECK(contact_agreement(clip.frames, clip.frames, box) == 1.0);

    // 4-frame pair differing in exactly one label: contact starts at 2, so
    // replacing frame 3 with a no-contact frame flips one of four labels
    std::vector<Tensor> source(clip.frames.begin(), clip.frames.begin() + 4);
    std::vector<Tensor> edited = source;
    edited[3] = clip.frames[0];
    double ca = contact_agreement(source, edited, box);
    // oracle count
    int match = 0;
    for (int i = 0; i < 4; ++i) {
        bool s = detect_hand(source[(size_t)i], box).in_contact;
        bool e = detect_hand(edited[(size_t)i], box).in_contact;
        if (s == e)
            ++match;
    }
    CHECK(ca == doctest::Approx(match / 4.0));
    CHECK(ca == doctest::Approx(0.75));
}

TEST_CASE("hand agreement: identical, disjoint, 1/7 case") {
    // pixel-count oracle for the spec boxes
    BBox a{0, 0, 2, 2}, b{1, 1, 3, 3};
    int64_t inter = 0, uni = 0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            bool in_a = a.contains(x, y), in_b = b.contains(x, y);
            if (in_a && in_b)
                ++inter;
            if (in_a || in_b)
                ++uni;
        }
    CHECK(box_iou(a, b) == doctest::Approx((double)inter / (double)uni));
    CHECK(box_iou(a, b) == doctest::Approx(1.0 / 7.0));

    BBox eval_box{40, 40, 60, 60};
    Tensor fa = flat_frame(64, 64, bg_color());
    paint_rect(fa, BBox{10, 10, 20, 20}, hand_color());
    std::vector<Tensor> va{fa};
    CHECK(hand_agreement(va, va, eval_box) == 1.0);

    Tensor fb = flat_frame(64, 64, bg_color());
    paint_rect(fb, BBox{30, 30, 38, 38}, hand_color());
    std::vector<Tensor> vb{fb};
    CHECK(hand_agreement(va, vb, eval_box) == 0.0);

    // scaled spec case at 10x: boxes (0,0,20,20) and (10,10,30,30)
    Tensor f1 = flat_frame(64, 64, bg_color());
    paint_rect(f1, BBox{0, 0, 20, 20}, hand_color());
    Tensor f2 = flat_frame(64, 64, bg_color());
    paint_rect(f2, BBox{10, 10, 30, 30}, hand_color());
    CHECK(hand_agreement({f1}, {f2}, eval_box) == doctest::Approx(1.0 / 7.0));

    // both missing counts as agreement
    Tensor blank = flat_frame(64, 64, bg_color());
    CHECK(hand_agreement({blank}, {blank}, eval_box) == 1.0);
    // one missing counts as zero
    CHECK(hand_agreement({fa}, {blank}, eval_box) == 0.0);
}

TEST_CASE("hand fidelity: clean render, erased band, bounds") {
    VideoClip clip = generate_clip(contact_spec(7));
    BBox box = bbox_from_mask(clip.object_masks[0]);
    double clean = hand_fidelity(clip.frames, clip.frames, box);
    CHECK(clean == doctest::Approx(1.0).epsilon(1e-9));

    // erase the hue band from the edited video
    std::vector<Tensor> erased;
    for (const auto& f : clip.frames) {
        Tensor g = f;
        for (int y = 0; y < clip.height(); ++y)
            for (int x = 0; x < clip.width(); ++x) {
                auto hsv = rgb_to_hsv(g.at(0, y, x), g.at(1, y, x), g.at(2, y, x));
                if (hsv[0] >= 0.55 && hsv[0] <= 0.65 && hsv[1] >= 0.5) {
                    Rgb bg = bg_color();
                    g.at(0, y, x) = bg.r;
                    g.at(1, y, x) = bg.g;
                    g.at(2, y, x) = bg.b;
                }
            }
        erased.push_back(g);
    }
    CHECK(hand_fidelity(clip.frames, erased, box) == 0.0);

    double v = hand_fidelity(clip.frames, clip.frames, box);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
}

TEST_CASE("subject consistency: static, orthogonal stub, brute-force match") {
    VideoClip clip = generate_clip(contact_spec(11));
    BBox box = bbox_from_mask(clip.object_masks[0]);

    std::vector<Tensor> static_video(4, clip.frames[0]);
    EmbedFn mean_embed = [](const Tensor& cr) {
        Tensor e({3});
        for (int c = 0; c < 3; ++c) {
            double s = 0;
            for (int y = 0; y < cr.shape[1]; ++y)
                for (int x = 0; x < cr.shape[2]; ++x)
                    s += cr.at(c, y, x);
            e[c] = s + 0.1;
        }
        return e;
    };
    CHECK(subject_consistency(static_video, box, mean_embed) == doctest::Approx(1.0));

    // orthogonal embeddings by construction map to 0.5
    int call = 0;
    EmbedFn ortho = [&call](const Tensor&) {
        Tensor e({4});
        e[(size_t)(call++ % 4)] = 1.0;
        return e;
    };
    CHECK(subject_consistency(static_video, box, ortho) == doctest::Approx(0.5));

    // matches an independent pairwise loop on real frames
    call = 0;
    std::vector<Tensor> video(clip.frames.begin(), clip.frames.begin() + 4);
    double got = subject_consistency(video, box, mean_embed);
    std::vector<Tensor> embs;
    for (const auto& f : video)
        embs.push_back(mean_embed(crop(f, box.x0, box.y0, box.width(), box.height())));
    double acc = 0;
    for (size_t i = 0; i + 1 < embs.size(); ++i) {
        double d = dot(embs[i], embs[i + 1]);
        double na = std::sqrt(dot(embs[i], embs[i])), nb = std::sqrt(dot(embs[i + 1], embs[i + 1]));
        acc += (std::clamp(d / (na * nb), -1.0, 1.0) + 1.0) / 2.0;
    }
    CHECK(got == doctest::Approx(acc / 3.0));
}

TEST_CASE("motion smoothness: constant, ordered vs shuffled, clamp case") {
    Tensor a = flat_frame(16, 16, bg_color());
    std::vector<Tensor> constant(5, a);
    CHECK(motion_smoothness(constant) == 1.0);

    // constant-velocity translation scores above a shuffled ordering
    VideoClip clip = generate_clip([] {
        SceneSpec s = contact_spec(13);
        s.grasp_frame = 0;
        s.trajectory.clear();
        for (int i = 0; i < 6; ++i)
            s.trajectory.emplace_back(22 + 2 * i, 30);
        return s;
    }());
    double ordered = motion_smoothness(clip.frames);
    std::vector<Tensor> shuffled = {clip.frames[3], clip.frames[0], clip.frames[5],
                                    clip.frames[1], clip.frames[4], clip.frames[2]};
    CHECK(ordered > motion_smoothness(shuffled));

    // alternating black/white with scale=1: second difference 2 per channel
    Tensor black({3, 8, 8});
    Tensor white({3, 8, 8});
    white.fill(1.0);
    std::vector<Tensor> alternating = {black, white, black, white};
    CHECK(motion_smoothness(alternating, 1.0) == 0.0);
}

TEST_CASE("metric report values stay in [0,1] and CSV round-trips") {
    VideoClip clip = generate_clip(contact_spec(17));
    BBox box = bbox_from_mask(clip.object_masks[0]);
    EmbedFn mean_embed = [](const Tensor& cr) {
        Tensor e({3});
        for (int c = 0; c < 3; ++c)
            e[c] = cr.at(c, 0, 0) + 0.5;
        return e;
    };
    MetricReport rep = evaluate_video(clip.frames, clip.frames, box, mean_embed);
    for (double v : {rep.contact_agreement, rep.hand_agreement, rep.hand_fidelity,
                     rep.subject_consistency, rep.motion_smoothness, rep.motion_alignment}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(rep.contact_agreement == 1.0);
    CHECK(rep.hand_agreement == 1.0);
    CHECK(rep.motion_alignment == 1.0);

    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "objswap_metrics.csv";
    MetricsRow row;
    row.clip = "clip_0001";
    row.method = "two_stage";
    row.r = 50;
    row.report = rep;
    write_metrics_csv(p.string(), {row});
    std::ifstream f(p);
    std::string header, line;
    std::getline(f, header);
    CHECK(header ==
          "clip,method,r,contact_agreement,hand_agreement,hand_fidelity,subject_consistency,"
          "motion_smoothness,motion_alignment");
    std::getline(f, line);
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    CHECK(cell == "clip_0001");
    std::getline(ss, cell, ',');
    CHECK(cell == "two_stage");
    std::getline(ss, cell, ',');
    CHECK(std::stod(cell) == 50.0);
    std::getline(ss, cell, ',');
    CHECK(std::stod(cell) == rep.contact_agreement);
    fs::remove(p);
}
