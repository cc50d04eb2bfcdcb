#include "objswap/pipeline.hpp"

#include "objswap/errors.hpp"
#include "objswap/png_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace objswap {

Models Models::load(const std::string& codec_path, const std::string& stage1_path,
                    const std::string& stage2_path) {
    auto require = [](const std::string& p, const char* what, const char* cmd) {
        if (p.empty() || !fs::exists(p))
            throw CheckpointError(std::string(what) + " checkpoint not found at '" + p +
                                  "'; train one with `objswap train " + cmd +
                                  " --config <file> --data <dir> --out <ckpt>`");
    };
    require(codec_path, "codec", "codec");
    require(stage1_path, "stage-1", "stage1");
    require(stage2_path, "stage-2", "stage2");
    return Models{load_codec(codec_path), load_stage1(stage1_path), load_stage2(stage2_path)};
}

int select_edit_frame(const std::vector<Tensor>& frames, const BBox& eval_box, Rng& rng,
                      bool* no_contact_fallback, const HandDetectorConfig& cfg) {
    std::vector<int> contact;
    for (int i = 0; i < (int)frames.size(); ++i)
        if (detect_hand(frames[(size_t)i], eval_box, cfg).in_contact)
            contact.push_back(i);
    if (no_contact_fallback)
        *no_contact_fallback = contact.empty();
    if (contact.empty())
        return (int)frames.size() / 2;
    return contact[rng.uniform_index(contact.size())];
}

Tensor estimate_object_mask(const Tensor& frame, const HandDetectorConfig& cfg) {
    int h = image_height(frame), w = image_width(frame);
    Tensor mask({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto hsv = rgb_to_hsv(frame.at(0, y, x), frame.at(1, y, x), frame.at(2, y, x));
            bool hand_band = hsv[0] >= cfg.hue_lo && hsv[0] <= cfg.hue_hi && hsv[1] >= cfg.sat_min;
            if (!hand_band && hsv[1] >= 0.45)
                mask.at(y, x) = 1.0;
        }
    return dilate(mask, 1);
}

namespace {

RefObjectImage load_reference(const std::string& path) {
    Tensor img = read_png(path);
    RefObjectImage ref;
    if (img.shape[0] == 4) {
        ref.rgba = img;
    } else if (img.shape[0] == 3) {
        // treat non-black pixels as support
        int h = img.shape[1], w = img.shape[2];
        ref.rgba = Tensor({4, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = img.at(0, y, x) + img.at(1, y, x) + img.at(2, y, x);
                for (int c = 0; c < 3; ++c)
                    ref.rgba.at(c, y, x) = img.at(c, y, x);
                ref.rgba.at(3, y, x) = s > 0.02 ? 1.0 : 0.0;
            }
    } else {
        throw ValidationError("ref", "reference image must be RGB or RGBA");
    }
    return ref;
}

MaskedSequence build_masked_sequence(const VideoClip& clip, const EditRequest& req) {
    switch (req.box_source) {
        case BoxSource::ground_truth:
            return mask_sequence(clip.frames, clip.object_masks);
        case BoxSource::from_mask: {
            std::vector<Tensor> est;
            for (const auto& f : clip.frames)
                est.push_back(estimate_object_mask(f));
            return mask_sequence(clip.frames, est);
        }
        case BoxSource::user_box: {
            if (!req.user_box)
                throw ValidationError("box", "user_box source requires an explicit box");
            BBox sq = squarify(*req.user_box, clip.height(), clip.width());
            MaskedSequence ms;
            ms.box = sq;
            for (const auto& f : clip.frames)
                ms.frames.push_back(mask_frame(f, sq));
            return ms;
        }
    }
    throw ValidationError("box_source", "unknown box source");
}

json box_json(const BBox& b) {
    return json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
}

}  // namespace

EditResult run_edit(const EditRequest& req, Models& models) {
    SparsityLevel{req.r}.validate();
    VideoClip clip = load_clip(req.clip_dir);
    if (req.anchor_policy == AnchorPolicy::fixed_index &&
        (req.fixed_index < 0 || req.fixed_index >= clip.frame_count()))
        throw ValidationError("anchor", "fixed index outside the clip");

    MaskedSequence ms = build_masked_sequence(clip, req);

    Rng anchor_rng(req.seed, "anchor_choice");
    bool fallback = false;
    int anchor = req.anchor_policy == AnchorPolicy::fixed_index
                     ? req.fixed_index
                     : select_edit_frame(clip.frames, ms.box, anchor_rng, &fallback);

    // stage-I swap on the anchor frame
    BBox stage1_box = ms.box;
    if (req.box_source != BoxSource::user_box &&
        mask_area(clip.object_masks[(size_t)anchor]) > 0) {
        const Tensor& m = req.box_source == BoxSource::from_mask
                              ? estimate_object_mask(clip.frames[(size_t)anchor])
                              : clip.object_masks[(size_t)anchor];
        stage1_box = squarify(bbox_from_mask(m), clip.height(), clip.width());
    }
    RefObjectImage ref = load_reference(req.ref_image);
    EditFrameOptions s1opts;
    s1opts.ratio = req.stage1_ratio;
    s1opts.guidance_scale = req.guidance_scale;
    s1opts.seed = req.seed;
    EditFrameResult s1 = edit_frame(clip.frames[(size_t)anchor], stage1_box, ref, models.stage1,
                                    models.codec, s1opts);

    // stage-II propagation with source-video flow
    FlowProvider flows = make_flow_provider(clip, flow_backend_from_name(req.flow_backend));
    GenerateOptions s2opts;
    s2opts.guidance_scale = req.guidance_scale;
    s2opts.seed = req.seed;
    GenerateResult s2 = generate_video(clip.frames, ms, s1.frame, anchor, req.r, models.stage2,
                                       models.codec, flows, s2opts);

    EditResult res;
    res.frames = s2.frames;
    res.anchor_index = anchor;
    res.shared_box = ms.box;

    json report;
    report["clip"] = clip.id;
    report["anchor_index"] = anchor;
    report["anchor_no_contact_fallback"] = fallback;
    report["shared_box"] = box_json(ms.box);
    report["stage1_box"] = box_json(s1.box);
    report["r"] = req.r;
    report["points_count"] = s2.points_count;
    report["seed"] = req.seed;
    report["guidance_scale"] = req.guidance_scale;
    report["flow_backend"] = req.flow_backend;
    json backends = json::array();
    for (size_t i = 0; i + 1 < clip.frames.size(); ++i)
        backends.push_back(flow_backend_name(flows.backend));
    report["per_pair_flow_backend"] = backends;
    json origins = json::array();
    for (const auto& [x, y] : s2.warped.points.origins)
        origins.push_back({x, y});
    report["point_origins"] = origins;
    report["coverage_violations"] = ms.coverage_violations;
    res.report = report;

    if (!req.out_dir.empty()) {
        fs::create_directories(req.out_dir);
        save_frames(res.frames, req.out_dir, "frame");
        json meta{{"anchor_index", anchor},
                  {"r", req.r},
                  {"seed", req.seed},
                  {"guidance_scale", req.guidance_scale}};
        std::ofstream(req.out_dir + "/edit_meta.json") << meta.dump(2) << "\n";
        std::ofstream(req.out_dir + "/report.json") << report.dump(2) << "\n";
    }
    return res;
}

SparsityAblation ablate_sparsity(const EditRequest& req, const std::vector<double>& r_values,
                                 Models& models) {
    VideoClip clip = load_clip(req.clip_dir);
    SparsityAblation out;
    out.r_values = r_values;
    EmbedFn embed = [&](const Tensor& cr) {
        RefObjectImage tmp;
        int h = image_height(cr), w = image_width(cr);
        tmp.rgba = Tensor({4, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c)
                    tmp.rgba.at(c, y, x) = cr.at(c, y, x);
                tmp.rgba.at(3, y, x) = 1.0;
            }
        return models.stage1.encode_object(tmp);
    };
    for (double r : r_values) {
        EditRequest sub = req;
        sub.r = r;
        sub.out_dir = req.out_dir.empty() ? "" : req.out_dir + "/r_" + std::to_string((int)r);
        EditResult er = run_edit(sub, models);
        MetricsRow row;
        row.clip = clip.id;
        row.method = "two_stage";
        row.r = r;
        row.report = evaluate_video(clip.frames, er.frames, er.shared_box, embed);
        out.table.push_back(row);
        out.edits.push_back(std::move(er));
    }
    if (!req.out_dir.empty()) {
        fs::create_directories(req.out_dir);
        write_metrics_csv(req.out_dir + "/sparsity_metrics.csv", out.table);
        std::vector<std::vector<Tensor>> rows{clip.frames};
        for (const auto& e : out.edits)
            rows.push_back(e.frames);
        write_png(req.out_dir + "/contact_sheet.png", frame_grid(rows));
    }
    return out;
}

FrameChoiceAblation ablate_frame_choice(const EditRequest& req, const std::vector<int>& indices,
                                        Models& models) {
    VideoClip clip = load_clip(req.clip_dir);
    FrameChoiceAblation out;
    out.indices = indices;
    for (int idx : indices) {
        if (idx < 0 || idx >= clip.frame_count())
            throw ValidationError("anchor", "index " + std::to_string(idx) + " outside the clip");
        EditRequest sub = req;
        sub.anchor_policy = AnchorPolicy::fixed_index;
        sub.fixed_index = idx;
        sub.out_dir = req.out_dir.empty() ? "" : req.out_dir + "/anchor_" + std::to_string(idx);
        EditResult er = run_edit(sub, models);
        out.in_box_errors.push_back(in_box_mse(clip.frames, er.frames, er.shared_box));
        out.edits.push_back(std::move(er));
    }
    if (!req.out_dir.empty()) {
        fs::create_directories(req.out_dir);
        json j;
        j["indices"] = out.indices;
        j["in_box_mse"] = out.in_box_errors;
        std::ofstream(req.out_dir + "/frame_choice.json") << j.dump(2) << "\n";
        std::vector<std::vector<Tensor>> rows{clip.frames};
        for (const auto& e : out.edits)
            rows.push_back(e.frames);
        write_png(req.out_dir + "/contact_sheet.png", frame_grid(rows));
    }
    return out;
}

Tensor frame_grid(const std::vector<std::vector<Tensor>>& rows, int pad) {
    int fh = image_height(rows[0][0]), fw = image_width(rows[0][0]);
    size_t cols = 0;
    for (const auto& r : rows)
        cols = std::max(cols, r.size());
    int H = (int)rows.size() * (fh + pad) + pad;
    int W = (int)cols * (fw + pad) + pad;
    Tensor grid = make_image(3, H, W, 1.0);
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c)
            blit(grid, rows[r][c], (int)(pad + c * (fw + pad)), (int)(pad + r * (fh + pad)));
    return grid;
}

void save_frames(const std::vector<Tensor>& frames, const std::string& dir,
                 const std::string& stem) {
    fs::create_directories(dir);
    for (size_t i = 0; i < frames.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%04zu.png", stem.c_str(), i);
        write_png(dir + "/" + name, frames[i]);
    }
}

}  // namespace objswap
