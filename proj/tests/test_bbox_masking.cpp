#include "objswap/bbox.hpp"
#include "objswap/errors.hpp"
#include "objswap/masking.hpp"
#include "objswap/rng.hpp"

#include <doctest.h>

using namespace objswap;

namespace {

// brute-force tight box oracle
BBox scan_box(const Tensor& mask) {
    int h = mask.shape[0], w = mask.shape[1];
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(y, x) > 0.5) {
                if (x < x0) x0 = x;
                if (x > x1) x1 = x;
                if (y < y0) y0 = y;
                if (y > y1) y1 = y;
            }
    return {x0, y0, x1 + 1, y1 + 1};
}

Tensor random_mask(Rng& rng, int h, int w, double p) {
    Tensor m({h, w});
    for (auto& v : m.data)
        v = rng.uniform() < p ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_CASE("bbox_from_mask basics and oracle") {
    Tensor m({8, 8});
    m.at(3, 5) = 1.0;  // single pixel at row 3, col 5
    CHECK(bbox_from_mask(m) == BBox{5, 3, 6, 4});

    Tensor full({8, 8});
    full.fill(1.0);
    CHECK(bbox_from_mask(full) == BBox{0, 0, 8, 8});

    Tensor two({8, 8});
    two.at(1, 1) = 1.0;
    two.at(4, 6) = 1.0;
    BBox b = bbox_from_mask(two);
    CHECK(b == BBox{1, 1, 7, 5});
    CHECK(b == scan_box(two));

    Tensor empty({8, 8});
    CHECK_THROWS_AS(bbox_from_mask(empty), EmptyMaskError);

    Rng rng(123);
    for (int i = 0; i < 50; ++i) {
        Tensor rm = random_mask(rng, 12, 9, 0.2);
        if (mask_area(rm) == 0)
            continue;
        CHECK(bbox_from_mask(rm) == scan_box(rm));
    }
}

TEST_CASE("squarify spec cases") {
    CHECK(squarify(BBox{2, 4, 10, 8}, 16, 16) == BBox{2, 2, 10, 10});
    // already-square interior box unchanged
    CHECK(squarify(BBox{3, 3, 7, 7}, 16, 16) == BBox{3, 3, 7, 7});
    // expand to the frame when the long side exceeds it
    CHECK(squarify(BBox{0, 0, 12, 4}, 12, 12) == BBox{0, 0, 12, 12});
}

TEST_CASE("squarify properties: square, contained, idempotent, never shrinks") {
    Rng rng(7);
    for (int i = 0; i < 300; ++i) {
        int H = rng.uniform_int(8, 40), W = rng.uniform_int(8, 40);
        int x0 = rng.uniform_int(0, W - 2), y0 = rng.uniform_int(0, H - 2);
        int x1 = rng.uniform_int(x0 + 1, W), y1 = rng.uniform_int(y0 + 1, H);
        BBox b{x0, y0, x1, y1};
        BBox s = squarify(b, H, W);
        CHECK(s.is_square());
        CHECK(s.x0 >= 0);
        CHECK(s.y0 >= 0);
        CHECK(s.x1 <= W);
        CHECK(s.y1 <= H);
        CHECK(s.width() >= std::min({b.width(), b.height(), std::min(H, W)}));
        CHECK(squarify(s, H, W) == s);
        // contains the input box unless clamped by the frame
        if (s.width() == std::max(b.width(), b.height())) {
            bool contained = s.x0 <= b.x0 && s.x1 >= b.x1 && s.y0 <= b.y0 && s.y1 >= b.y1;
            // shifting at the border can move off-center but must still cover
            // whenever the square side fits
            if (b.width() <= s.width() && b.height() <= s.width())
                CHECK(contained);
        }
    }
}

TEST_CASE("mask_frame zeroing") {
    Rng rng(5);
    Tensor frame({3, 8, 8});
    for (auto& v : frame.data)
        v = rng.uniform(0.1, 1.0);  // nonzero so zeroed pixels are detectable

    Tensor all = mask_frame(frame, BBox{0, 0, 8, 8});
    for (int64_t i = 0; i < all.numel(); ++i)
        CHECK(all[i] == 0.0);

    Tensor one = mask_frame(frame, BBox{0, 0, 1, 1});
    int64_t zeroed = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                if (one.at(c, y, x) == 0.0) {
                    ++zeroed;
                    CHECK(x == 0);
                    CHECK(y == 0);
                }
    CHECK(zeroed == 3);

    // brute-force count for an interior box
    Tensor mid = mask_frame(frame, BBox{2, 2, 6, 6});
    int64_t count = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            if (mid.at(0, y, x) == 0.0 && mid.at(1, y, x) == 0.0 && mid.at(2, y, x) == 0.0)
                ++count;
    CHECK(count == 16);

    // idempotent
    Tensor twice = mask_frame(mid, BBox{2, 2, 6, 6});
    CHECK(mse(twice, mid) == 0.0);
}

TEST_CASE("crop_center geometry and inversion") {
    Rng rng(17);
    // window == whole frame -> identity content at model res
    Tensor frame({3, 32, 32});
    for (auto& v : frame.data)
        v = rng.uniform();
    auto [window_frame, t] = crop_center(frame, BBox{8, 8, 24, 24}, 0.5, 32, Resample::nearest);
    CHECK(t.win_side == 32);
    CHECK(t.win_x0 == 0);
    CHECK(t.win_y0 == 0);
    CHECK(mse(window_frame, frame) == 0.0);

    // box side 8, ratio 0.5 -> window side 16 before clamping
    auto [wf2, t2] = crop_center(frame, BBox{4, 4, 12, 12}, 0.5, 64, Resample::nearest);
    CHECK(t2.win_side == 16);

    // ratio outside range rejected
    CHECK_THROWS_AS(crop_center(frame, BBox{4, 4, 12, 12}, 0.8, 64, Resample::nearest),
                    ValidationError);

    // corner box: window flush to the corner, transform round-trips coordinates
    auto [wf3, t3] = crop_center(frame, BBox{0, 0, 8, 8}, 0.4, 40, Resample::nearest);
    CHECK(t3.win_x0 == 0);
    CHECK(t3.win_y0 == 0);
    for (int i = 0; i < 50; ++i) {
        double fx = rng.uniform(t3.win_x0, t3.win_x0 + t3.win_side - 1);
        double fy = rng.uniform(t3.win_y0, t3.win_y0 + t3.win_side - 1);
        double mx = t3.frame_to_model_x(fx);
        double my = t3.frame_to_model_y(fy);
        CHECK(t3.model_to_frame_x(mx) == doctest::Approx(fx).epsilon(1e-12));
        CHECK(t3.model_to_frame_y(my) == doctest::Approx(fy).epsilon(1e-12));
    }
}

TEST_CASE("paste_back leaves outside-box pixels bit-identical") {
    Rng rng(23);
    Tensor frame({3, 24, 24});
    for (auto& v : frame.data)
        v = rng.uniform();
    BBox box = squarify(BBox{5, 7, 13, 13}, 24, 24);
    auto [model_frame, t] = crop_center(frame, box, 0.5, 32, Resample::nearest);
    Tensor edited = model_frame;
    for (auto& v : edited.data)
        v = rng.uniform();
    Tensor out = paste_back(frame, edited, box, t);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                if (!box.contains(x, y))
                    CHECK(out.at(c, y, x) == frame.at(c, y, x));
}

TEST_CASE("mask_sequence selects largest square box and applies it everywhere") {
    // object growing from 4x4 to 8x8
    int H = 16, W = 16;
    std::vector<Tensor> frames, masks;
    Rng rng(31);
    for (int n = 0; n < 3; ++n) {
        Tensor f({3, H, W});
        for (auto& v : f.data)
            v = rng.uniform(0.2, 1.0);
        Tensor m({H, W});
        int side = 4 + 2 * n;
        for (int y = 2; y < 2 + side; ++y)
            for (int x = 3; x < 3 + side; ++x)
                m.at(y, x) = 1.0;
        frames.push_back(f);
        masks.push_back(m);
    }
    MaskedSequence ms = mask_sequence(frames, masks);
    CHECK(ms.box.width() == 8);
    CHECK(ms.box.is_square());

    // masked region identical (all zero) across frames at the same pixels
    for (const auto& f : ms.frames)
        for (int c = 0; c < 3; ++c)
            for (int y = ms.box.y0; y < ms.box.y1; ++y)
                for (int x = ms.box.x0; x < ms.box.x1; ++x)
                    CHECK(f.at(c, y, x) == 0.0);

    // static object: shared box equals the single-frame square box
    std::vector<Tensor> sframes{frames[0], frames[0]};
    std::vector<Tensor> smasks{masks[1], masks[1]};
    MaskedSequence s2 = mask_sequence(sframes, smasks);
    CHECK(s2.box == squarify(bbox_from_mask(masks[1]), H, W));

    // empty mask names the frame
    std::vector<Tensor> bad_masks = masks;
    bad_masks[1] = Tensor({H, W});
    try {
        mask_sequence(frames, bad_masks);
        FAIL("expected EmptyMaskError");
    } catch (const EmptyMaskError& e) {
        CHECK(e.frame_index() == 1);
    }
}

TEST_CASE("mask_sequence union mode covers every mask pixel") {
    int H = 20, W = 20;
    Rng rng(37);
    std::vector<Tensor> frames, masks;
    for (int n = 0; n < 4; ++n) {
        Tensor f({3, H, W});
        Tensor m({H, W});
        int x0 = 2 + 3 * n;
        for (int y = 4; y < 9; ++y)
            for (int x = x0; x < x0 + 4; ++x)
                m.at(y, x) = 1.0;
        frames.push_back(f);
        masks.push_back(m);
    }
    MaskedSequence ms = mask_sequence(frames, masks, SequenceBoxMode::union_box);
    for (int n = 0; n < 4; ++n)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (masks[(size_t)n].at(y, x) > 0.5)
                    CHECK(ms.box.contains(x, y));
    CHECK(ms.coverage_violations.empty());

    // largest-area mode logs violations for the moving object
    MaskedSequence ml = mask_sequence(frames, masks, SequenceBoxMode::largest_area);
    CHECK(!ml.coverage_violations.empty());
}
