#include "objswap/corpus.hpp"
#include "objswap/flow.hpp"
#include "objswap/warp.hpp"

#include <doctest.h>

#include <chrono>
#include <tuple>
#include <cmath>
#include <set>

using namespace objswap;

namespace {

// Independent scalar reference: chains points through flows and paints them,
// sharing no code with the library path.
std::vector<Tensor> reference_track_and_warp(const std::vector<Tensor>& masked_frames,
                                             const BBox& box, const Tensor& cond, int c,
                                             const std::vector<std::pair<int, int>>& origins,
                                             const std::vector<Tensor>& fwd,
                                             const std::vector<Tensor>& bwd) {
    int n = (int)masked_frames.size();
    int h = cond.shape[1], w = cond.shape[2];
    // positions[i][p] = (x, y, valid)
    std::vector<std::vector<std::array<double, 3>>> pos(
        (size_t)n, std::vector<std::array<double, 3>>(origins.size()));
    for (size_t p = 0; p < origins.size(); ++p) {
        pos[(size_t)c][p] = {(double)origins[p].first, (double)origins[p].second, 1.0};
        double px = origins[p].first, py = origins[p].second;
        double ok = 1.0;
        for (int i = c; i + 1 < n; ++i) {
            if (ok > 0.5) {
                int lx = (int)std::lround(px), ly = (int)std::lround(py);
                px += fwd[(size_t)i].at(0, ly, lx);
                py += fwd[(size_t)i].at(1, ly, lx);
                if (std::lround(px) < 0 || std::lround(px) >= w || std::lround(py) < 0 ||
                    std::lround(py) >= h)
                    ok = 0.0;
            }
            pos[(size_t)i + 1][p] = {px, py, ok};
        }
        px = origins[p].first;
        py = origins[p].second;
        ok = 1.0;
        for (int i = c - 1; i >= 0; --i) {
            if (ok > 0.5) {
                int lx = (int)std::lround(px), ly = (int)std::lround(py);
                px += bwd[(size_t)i].at(0, ly, lx);
                py += bwd[(size_t)i].at(1, ly, lx);
                if (std::lround(px) < 0 || std::lround(px) >= w || std::lround(py) < 0 ||
                    std::lround(py) >= h)
                    ok = 0.0;
            }
            pos[(size_t)i][p] = {px, py, ok};
        }
    }
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) {
        if (i == c) {
            out.push_back(cond);
            continue;
        }
        Tensor f = masked_frames[(size_t)i];
        for (size_t p = 0; p < origins.size(); ++p) {
            if (pos[(size_t)i][p][2] < 0.5)
                continue;
            int x = (int)std::lround(pos[(size_t)i][p][0]);
            int y = (int)std::lround(pos[(size_t)i][p][1]);
            if (x < box.x0 || x >= box.x1 || y < box.y0 || y >= box.y1)
                continue;
            for (int ch = 0; ch < 3; ++ch)
                f.at(ch, y, x) = cond.at(ch, origins[p].second, origins[p].first);
        }
        out.push_back(f);
    }
    return out;
}

Tensor random_frame(Rng& rng, int h, int w) {
    Tensor f({3, h, w});
    for (auto& v : f.data)
        v = rng.uniform();
    return f;
}

}  // namespace

TEST_CASE("sample_points counts, bounds, distinctness") {
    BBox box{2, 3, 12, 13};  // 10x10
    Rng rng(1);
    CHECK(sample_points(box, SparsityLevel{0.0}, rng).empty());

    Rng rng2(1);
    auto all = sample_points(box, SparsityLevel{100.0}, rng2);
    CHECK(all.size() == 100);
    std::set<std::pair<int, int>> uniq(all.begin(), all.end());
    CHECK(uniq.size() == 100);

    Rng rng3(1);
    auto half = sample_points(box, SparsityLevel{50.0}, rng3);
    CHECK(half.size() == 50);
    for (auto& [x, y] : half) {
        CHECK(box.contains(x, y));
    }
    std::set<std::pair<int, int>> uniq2(half.begin(), half.end());
    CHECK(uniq2.size() == 50);

    CHECK_THROWS(sample_points(box, SparsityLevel{150.0}, rng3));
}

TEST_CASE("sample_points prefix monotonicity on a shared stream") {
    BBox box{0, 0, 9, 9};
    for (uint64_t seed = 0; seed < 30; ++seed) {
        Rng a(seed), b(seed);
        auto small = sample_points(box, SparsityLevel{25.0}, a);
        auto large = sample_points(box, SparsityLevel{75.0}, b);
        REQUIRE(small.size() <= large.size());
        for (size_t i = 0; i < small.size(); ++i)
            CHECK(small[i] == large[i]);
    }
}

TEST_CASE("estimate_flow: zero motion and rigid translation") {
    Rng rng(3);
    // textured frame so block matching has gradients
    SceneSpec s;
    s.object_shape = ObjectShape::square;
    s.object_color = hsv_to_rgb(0.1, 0.8, 0.8);
    s.grasp_frame = 0;
    s.frame_h = 64;
    s.frame_w = 64;
    s.num_frames = 4;
    s.rng_seed = 11;
    for (int i = 0; i < 4; ++i)
        s.trajectory.emplace_back(28 + 2 * i, 30);
    VideoClip clip = generate_clip(s);

    FlowResult same = estimate_flow(clip.frames[0], clip.frames[0]);
    CHECK(same.backend == FlowBackend::block_matching);
    CHECK(linf(same.flow) <= 0.5);

    // oracle passthrough is exact
    FlowResult oracle = oracle_flow_forward(clip, 0);
    for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x)
            if (clip.object_masks[0].at(y, x) > 0.5) {
                CHECK(oracle.flow.at(0, y, x) == 2.0);
                CHECK(oracle.flow.at(1, y, x) == 0.0);
            }

    // estimator median on object pixels within 0.5 px of the truth
    FlowResult est = estimate_flow(clip.frames[0], clip.frames[1]);
    std::vector<double> dxs, dys;
    for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x)
            if (clip.object_masks[0].at(y, x) > 0.5) {
                dxs.push_back(est.flow.at(0, y, x));
                dys.push_back(est.flow.at(1, y, x));
            }
    std::sort(dxs.begin(), dxs.end());
    std::sort(dys.begin(), dys.end());
    CHECK(std::fabs(dxs[dxs.size() / 2] - 2.0) <= 0.5);
    CHECK(std::fabs(dys[dys.size() / 2] - 0.0) <= 0.5);

    Tensor small({3, 8, 8});
    CHECK_THROWS(estimate_flow(clip.frames[0], small));
}

TEST_CASE("track: zero flow, constant flow, out-of-bounds, zero drift") {
    int h = 8, w = 8, n = 4;
    FlowProvider zero;
    zero.backend = FlowBackend::oracle;
    for (int i = 0; i + 1 < n; ++i) {
        zero.forward.push_back(Tensor({2, h, w}));
        zero.backward.push_back(Tensor({2, h, w}));
    }
    Rng rng(1);
    Tensor anchor = random_frame(rng, h, w);

    TrackedPoints tp = track_points({{2, 2}, {5, 6}}, zero, 1, n, anchor);
    for (int i = 0; i < n; ++i)
        for (size_t p = 0; p < 2; ++p) {
            CHECK(tp.tracks[(size_t)i][p].valid);
            CHECK(tp.tracks[(size_t)i][p].x == tp.origins[p].first);
            CHECK(tp.tracks[(size_t)i][p].y == tp.origins[p].second);
        }

    // constant (1,0): hand-chained positions from the spec
    FlowProvider one;
    one.backend = FlowBackend::oracle;
    for (int i = 0; i + 1 < n; ++i) {
        Tensor f({2, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                f.at(0, y, x) = 1.0;
        one.forward.push_back(f);
        Tensor b({2, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                b.at(0, y, x) = -1.0;
        one.backward.push_back(b);
    }
    TrackedPoints tc = track_points({{2, 2}}, one, 0, n, anchor);
    double expect_x[] = {2, 3, 4, 5};
    for (int i = 0; i < n; ++i) {
        CHECK(tc.tracks[(size_t)i][0].valid);
        CHECK(tc.tracks[(size_t)i][0].x == expect_x[i]);
        CHECK(tc.tracks[(size_t)i][0].y == 2.0);
    }

    // 1 px from the right edge with +2 flow: invalid from the first step on
    FlowProvider two;
    two.backend = FlowBackend::oracle;
    for (int i = 0; i + 1 < n; ++i) {
        Tensor f({2, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                f.at(0, y, x) = 2.0;
        two.forward.push_back(f);
        two.backward.push_back(Tensor({2, h, w}));
    }
    TrackedPoints te = track_points({{w - 2, 3}}, two, 0, n, anchor);
    CHECK(te.tracks[0][0].valid);
    for (int i = 1; i < n; ++i)
        CHECK(!te.tracks[(size_t)i][0].valid);

    // oracle flow on a rigid translation has zero drift in both directions
    SceneSpec s;
    s.object_shape = ObjectShape::disk;
    s.object_color = hsv_to_rgb(0.3, 0.8, 0.8);
    s.grasp_frame = 0;
    s.frame_h = 64;
    s.frame_w = 64;
    s.num_frames = 6;
    s.rng_seed = 77;
    for (int i = 0; i < 6; ++i)
        s.trajectory.emplace_back(24 + 2 * i, 30 + i);
    VideoClip clip = generate_clip(s);
    FlowProvider oracle = make_flow_provider(clip, FlowBackend::oracle);
    int c = 3;
    BBox box = bbox_from_mask(clip.object_masks[(size_t)c]);
    std::vector<std::pair<int, int>> origins;
    for (int y = box.y0 + 1; y < box.y1 - 1 && (int)origins.size() < 10; y += 2)
        origins.emplace_back(box.x0 + box.width() / 2, y);
    // keep only points on the object itself
    std::vector<std::pair<int, int>> obj_origins;
    for (auto& o : origins)
        if (clip.object_masks[(size_t)c].at(o.second, o.first) > 0.5)
            obj_origins.push_back(o);
    REQUIRE(!obj_origins.empty());
    TrackedPoints td = track_points(obj_origins, oracle, c, 6, clip.frames[(size_t)c]);
    for (int i = 0; i < 6; ++i) {
        double dx = (double)(s.trajectory[(size_t)i].first - s.trajectory[(size_t)c].first);
        double dy = (double)(s.trajectory[(size_t)i].second - s.trajectory[(size_t)c].second);
        for (size_t p = 0; p < obj_origins.size(); ++p) {
            CHECK(td.tracks[(size_t)i][p].valid);
            CHECK(td.tracks[(size_t)i][p].x == doctest::Approx(obj_origins[p].first + dx));
            CHECK(td.tracks[(size_t)i][p].y == doctest::Approx(obj_origins[p].second + dy));
        }
    }
}

TEST_CASE("warp_sequence degenerate contracts") {
    int h = 8, w = 8, n = 3;
    Rng rng(5);
    std::vector<Tensor> frames, masks;
    for (int i = 0; i < n; ++i) {
        frames.push_back(random_frame(rng, h, w));
        Tensor m({h, w});
        for (int y = 2; y < 6; ++y)
            for (int x = 2; x < 6; ++x)
                m.at(y, x) = 1.0;
        masks.push_back(m);
    }
    MaskedSequence ms = mask_sequence(frames, masks);
    Tensor cond = random_frame(rng, h, w);

    FlowProvider zero;
    zero.backend = FlowBackend::oracle;
    for (int i = 0; i + 1 < n; ++i) {
        zero.forward.push_back(Tensor({2, h, w}));
        zero.backward.push_back(Tensor({2, h, w}));
    }

    // r=0: all non-anchor frames equal the masked frames bit-exactly
    Rng pr(9);
    auto none = sample_points(ms.box, SparsityLevel{0.0}, pr);
    TrackedPoints t0 = track_points(none, zero, 1, n, cond);
    WarpedSequence w0 = warp_sequence(ms, cond, 1, t0);
    CHECK(mse(w0.frames[1], cond) == 0.0);
    CHECK(mse(w0.frames[0], ms.frames[0]) == 0.0);
    CHECK(mse(w0.frames[2], ms.frames[2]) == 0.0);

    // zero flow + r=100: every frame's box region equals the anchor's box region
    Rng pr2(9);
    auto full = sample_points(ms.box, SparsityLevel{100.0}, pr2);
    TrackedPoints t1 = track_points(full, zero, 1, n, cond);
    WarpedSequence w1 = warp_sequence(ms, cond, 1, t1);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            for (int y = ms.box.y0; y < ms.box.y1; ++y)
                for (int x = ms.box.x0; x < ms.box.x1; ++x)
                    CHECK(w1.frames[(size_t)i].at(c, y, x) == cond.at(c, y, x));

    // single point moved by (+1,+1): exact brute-force expectation
    std::vector<Tensor> f4, m4;
    for (int i = 0; i < 2; ++i) {
        Tensor f({3, 4, 4});
        f4.push_back(f);
        Tensor m({4, 4});
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                m.at(y, x) = 1.0;
        m4.push_back(m);
    }
    MaskedSequence ms4 = mask_sequence(f4, m4);
    Tensor cond4({3, 4, 4});
    cond4.at(0, 1, 1) = 1.0;  // red at (1,1)
    FlowProvider diag;
    diag.backend = FlowBackend::oracle;
    Tensor df({2, 4, 4});
    for (int64_t i = 0; i < 16; ++i) {
        df[i] = 1.0;       // dx plane
        df[16 + i] = 1.0;  // dy plane
    }
    diag.forward.push_back(df);
    diag.backward.push_back(Tensor({2, 4, 4}));
    TrackedPoints tp = track_points({{1, 1}}, diag, 0, 2, cond4);
    WarpedSequence wd = warp_sequence(ms4, cond4, 0, tp);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                double expect = (c == 0 && x == 2 && y == 2) ? 1.0 : 0.0;
                CHECK(wd.frames[1].at(c, y, x) == expect);
            }
}

TEST_CASE("warp oracle equivalence over 200 randomized instances") {
    auto start = std::chrono::steady_clock::now();
    Rng rng(2024);
    const double r_grid[4] = {0.0, 25.0, 50.0, 100.0};
    for (int inst = 0; inst < 200; ++inst) {
        int h = rng.uniform_int(4, 8), w = rng.uniform_int(4, 8);
        int n = rng.uniform_int(2, 4);
        int bx0 = rng.uniform_int(0, w - 2), by0 = rng.uniform_int(0, h - 2);
        int bx1 = rng.uniform_int(bx0 + 1, w), by1 = rng.uniform_int(by0 + 1, h);
        BBox box{bx0, by0, bx1, by1};

        std::vector<Tensor> masked;
        for (int i = 0; i < n; ++i)
            masked.push_back(mask_frame(random_frame(rng, h, w), box));
        MaskedSequence ms;
        ms.frames = masked;
        ms.box = box;
        Tensor cond = random_frame(rng, h, w);

        FlowProvider flows;
        flows.backend = FlowBackend::oracle;
        for (int i = 0; i + 1 < n; ++i) {
            Tensor f({2, h, w}), b({2, h, w});
            for (int64_t k = 0; k < f.numel(); ++k) {
                f[k] = rng.uniform_int(-2, 2) + (rng.bernoulli(0.3) ? 0.4 : 0.0);
                b[k] = rng.uniform_int(-2, 2);
            }
            flows.forward.push_back(f);
            flows.backward.push_back(b);
        }

        int c = rng.uniform_int(0, n - 1);
        double r = r_grid[rng.uniform_int(0, 3)];
        Rng point_rng(inst);
        auto origins = sample_points(box, SparsityLevel{r}, point_rng);

        TrackedPoints tp = track_points(origins, flows, c, n, cond);
        WarpedSequence ws = warp_sequence(ms, cond, c, tp);
        auto ref = reference_track_and_warp(ms.frames, box, cond, c, origins, flows.forward,
                                            flows.backward);
        REQUIRE(ws.frames.size() == ref.size());
        for (int i = 0; i < n; ++i)
            CHECK(mse(ws.frames[(size_t)i], ref[(size_t)i]) == 0.0);
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 10.0);
}

TEST_CASE("written-pixel monotonicity in r under a shared stream") {
    int h = 8, w = 8, n = 3;
    Rng rng(31);
    std::vector<Tensor> frames;
    for (int i = 0; i < n; ++i)
        frames.push_back(random_frame(rng, h, w));
    BBox box{1, 1, 7, 7};
    MaskedSequence ms;
    for (auto& f : frames)
        ms.frames.push_back(mask_frame(f, box));
    ms.box = box;
    Tensor cond = random_frame(rng, h, w);
    FlowProvider flows;
    flows.backend = FlowBackend::oracle;
    for (int i = 0; i + 1 < n; ++i) {
        Tensor f({2, h, w}), b({2, h, w});
        for (int64_t k = 0; k < f.numel(); ++k) {
            f[k] = rng.uniform_int(-1, 1);
            b[k] = rng.uniform_int(-1, 1);
        }
        flows.forward.push_back(f);
        flows.backward.push_back(b);
    }

    auto written_pixels = [&](double r, uint64_t seed) {
        Rng pr(seed);
        auto origins = sample_points(box, SparsityLevel{r}, pr);
        TrackedPoints tp = track_points(origins, flows, 1, n, cond);
        WarpedSequence ws = warp_sequence(ms, cond, 1, tp);
        std::set<std::tuple<int, int, int>> diff;
        for (int i = 0; i < n; ++i) {
            if (i == 1)
                continue;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c)
                        if (ws.frames[(size_t)i].at(c, y, x) != ms.frames[(size_t)i].at(c, y, x)) {
                            diff.insert({i, y, x});
                            break;
                        }
        }
        return diff;
    };

    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto s25 = written_pixels(25.0, seed);
        auto s75 = written_pixels(75.0, seed);
        for (const auto& px : s25)
            CHECK(s75.count(px));
    }
}
