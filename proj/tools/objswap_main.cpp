// objswap CLI: corpus generation, training, editing, evaluation, ablations.
// Subcommands exit 0 on success; failures print a machine-readable JSON error
// object to stderr and exit nonzero.

#include "objswap/config.hpp"
#include "objswap/errors.hpp"
#include "objswap/metrics.hpp"
#include "objswap/pipeline.hpp"
#include "objswap/png_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace objswap;

namespace {

struct CommonArgs {
    std::string config_path;
    int workers = 0;
};

RunConfig load_config_or_default(const std::string& path) {
    return path.empty() ? RunConfig::defaults() : RunConfig::load(path);
}

void apply_workers(int workers) {
    if (workers > 0)
        Eigen::setNbThreads(workers);
}

std::vector<Tensor> read_frame_dir(const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string n = e.path().filename().string();
        if (n.rfind("frame_", 0) == 0 && e.path().extension() == ".png")
            names.push_back(e.path().string());
    }
    std::sort(names.begin(), names.end());
    if (names.empty())
        throw IoError("no frame_*.png files in " + dir);
    std::vector<Tensor> frames;
    for (const auto& n : names)
        frames.push_back(read_png(n));
    return frames;
}

BBox parse_box(const std::string& s) {
    BBox b;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d", &b.x0, &b.y0, &b.x1, &b.y1) != 4)
        throw ValidationError("box", "expected x0,y0,x1,y1");
    return b;
}

int run_corpus_generate(const CommonArgs& common, const std::string& out_dir, int clips,
                        long long seed, bool overwrite) {
    RunConfig cfg = load_config_or_default(common.config_path);
    if (clips > 0)
        cfg.corpus.num_clips = clips;
    if (seed >= 0)
        cfg.corpus.seed = (uint64_t)seed;
    if (overwrite)
        cfg.corpus.overwrite = true;
    generate_corpus(cfg.corpus, out_dir);
    cfg.save_resolved(out_dir + "/resolved_config.json");
    std::cout << "wrote dataset with " << cfg.corpus.num_clips << " clips to " << out_dir << "\n";
    return 0;
}

int run_train(const CommonArgs& common, const std::string& what, const std::string& data,
              const std::string& out_ckpt) {
    RunConfig cfg = load_config_or_default(common.config_path);
    std::string data_dir = !data.empty() ? data : cfg.paths.data;
    if (data_dir.empty())
        throw ValidationError("data", "no dataset directory given (flag --data or paths.data)");
    std::string log_path = out_ckpt + ".log.ndjson";
    cfg.save_resolved(out_ckpt + ".resolved_config.json");

    if (what == "codec") {
        auto stats = train_codec(data_dir, cfg.codec, out_ckpt, log_path);
        std::cout << "codec: val loss " << stats.step0_val_loss << " -> " << stats.final_val_loss
                  << ", held-out PSNR " << stats.heldout_psnr << " dB\n";
        return 0;
    }
    if (cfg.paths.codec_ckpt.empty() || !fs::exists(cfg.paths.codec_ckpt))
        throw CheckpointError("training '" + what +
                              "' needs a trained codec; set paths.codec_ckpt in the config "
                              "(train one with `objswap train codec --config <file> --data <dir> "
                              "--out <ckpt>`)");
    CodecModel codec = load_codec(cfg.paths.codec_ckpt);
    if (what == "stage1") {
        auto stats = train_stage1(data_dir, codec, cfg.stage1, out_ckpt, log_path);
        std::cout << "stage1: val loss " << stats.step0_val_loss << " -> " << stats.final_val_loss
                  << "\n";
    } else if (what == "stage2") {
        auto stats = train_stage2(data_dir, codec, cfg.stage2, out_ckpt, log_path);
        std::cout << "stage2: val loss " << stats.step0_val_loss << " -> " << stats.final_val_loss
                  << "\n";
    } else if (what == "one-stage") {
        auto stats = train_one_stage(data_dir, codec, cfg.one_stage, out_ckpt, log_path);
        std::cout << "one-stage: val loss " << stats.step0_val_loss << " -> "
                  << stats.final_val_loss << "\n";
    } else {
        throw ValidationError("target", "unknown training target '" + what + "'");
    }
    return 0;
}

EditRequest build_edit_request(const RunConfig& cfg, const std::string& video,
                               const std::string& ref, double r, const std::string& anchor,
                               long long seed, const std::string& out_dir,
                               const std::string& box_flag) {
    EditRequest req;
    req.clip_dir = video;
    req.ref_image = ref;
    req.r = r >= 0 ? r : cfg.pipeline.r;
    if (!(req.r >= 0.0 && req.r <= 100.0))
        throw ValidationError("r", "sparsity must be in [0,100]");
    req.seed = seed >= 0 ? (uint64_t)seed : cfg.pipeline.seed;
    req.guidance_scale = cfg.pipeline.guidance_scale;
    req.flow_backend = cfg.pipeline.flow_backend;
    req.stage1_ratio = cfg.pipeline.stage1_ratio;
    req.out_dir = out_dir;
    if (anchor == "auto" || anchor.empty()) {
        req.anchor_policy = AnchorPolicy::auto_contact;
    } else {
        req.anchor_policy = AnchorPolicy::fixed_index;
        req.fixed_index = std::stoi(anchor);
    }
    if (!box_flag.empty()) {
        req.box_source = BoxSource::user_box;
        req.user_box = parse_box(box_flag);
    } else if (cfg.pipeline.box_source == "from_mask") {
        req.box_source = BoxSource::from_mask;
    } else {
        req.box_source = BoxSource::ground_truth;
    }
    return req;
}

Models load_models(const RunConfig& cfg, const std::string& codec_p, const std::string& s1_p,
                   const std::string& s2_p) {
    return Models::load(!codec_p.empty() ? codec_p : cfg.paths.codec_ckpt,
                        !s1_p.empty() ? s1_p : cfg.paths.stage1_ckpt,
                        !s2_p.empty() ? s2_p : cfg.paths.stage2_ckpt);
}

int run_edit_cmd(const CommonArgs& common, const std::string& video, const std::string& ref,
                 double r, const std::string& anchor, long long seed, const std::string& out_dir,
                 const std::string& codec_p, const std::string& s1_p, const std::string& s2_p,
                 const std::string& box_flag) {
    RunConfig cfg = load_config_or_default(common.config_path);
    EditRequest req = build_edit_request(cfg, video, ref, r, anchor, seed, out_dir, box_flag);
    Models models = load_models(cfg, codec_p, s1_p, s2_p);
    EditResult res = run_edit(req, models);
    if (!out_dir.empty())
        cfg.save_resolved(out_dir + "/resolved_config.json");
    std::cout << "edited " << res.frames.size() << " frames, anchor " << res.anchor_index
              << ", points " << res.report["points_count"] << "\n";
    return 0;
}

int run_eval(const CommonArgs& common, const std::string& source_dir, const std::string& edited_dir,
             const std::string& out_csv, const std::string& s1_p, const std::string& box_flag) {
    RunConfig cfg = load_config_or_default(common.config_path);
    std::vector<Tensor> edited = read_frame_dir(edited_dir);

    std::vector<Tensor> source;
    BBox box;
    HandDetectorConfig det{cfg.metrics.hue_lo, cfg.metrics.hue_hi, cfg.metrics.sat_min,
                           cfg.metrics.dilation_radius};
    if (fs::exists(fs::path(source_dir) / "meta.json")) {
        VideoClip clip = load_clip(source_dir);
        source = clip.frames;
        box = mask_sequence(clip.frames, clip.object_masks).box;
    } else {
        source = read_frame_dir(source_dir);
        if (box_flag.empty())
            throw ValidationError("box", "source has no masks; pass --box x0,y0,x1,y1");
        box = squarify(parse_box(box_flag), image_height(source[0]), image_width(source[0]));
    }
    if (!box_flag.empty())
        box = squarify(parse_box(box_flag), image_height(source[0]), image_width(source[0]));

    std::string s1_path = !s1_p.empty() ? s1_p : cfg.paths.stage1_ckpt;
    if (s1_path.empty() || !fs::exists(s1_path))
        throw CheckpointError(
            "subject consistency needs the stage-1 object encoder; pass --stage1 <ckpt> "
            "(train one with `objswap train stage1`)");
    Stage1Model s1 = load_stage1(s1_path);
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
        return s1.encode_object(tmp);
    };

    MetricsRow row;
    row.clip = fs::path(source_dir).filename().string();
    row.method = "edited";
    row.r = cfg.pipeline.r;
    row.report = evaluate_video(source, edited, box, embed, det, cfg.metrics.smoothness_scale);
    write_metrics_csv(out_csv, {row});
    std::cout << "wrote " << out_csv << "\n";
    return 0;
}

int run_ablate(const CommonArgs& common, const std::string& what, const std::string& out_dir,
               const std::string& video, const std::string& ref, long long seed) {
    RunConfig cfg = load_config_or_default(common.config_path);
    if (video.empty())
        throw ValidationError("video", "ablation needs --video <clip dir>");
    if (ref.empty())
        throw ValidationError("ref", "ablation needs --ref <image>");
    Models models = load_models(cfg, "", "", "");
    EditRequest req = build_edit_request(cfg, video, ref, -1, "auto", seed, out_dir, "");
    fs::create_directories(out_dir);
    cfg.save_resolved(out_dir + "/resolved_config.json");

    if (what == "sparsity") {
        auto ab = ablate_sparsity(req, {0, 25, 50, 75, 100}, models);
        std::cout << "sparsity ablation: " << ab.table.size() << " rows -> " << out_dir << "\n";
    } else if (what == "frame") {
        VideoClip clip = load_clip(video);
        Rng rng(req.seed, "anchor_choice");
        MaskedSequence ms = mask_sequence(clip.frames, clip.object_masks);
        int contact = select_edit_frame(clip.frames, ms.box, rng);
        std::vector<int> indices = {0, clip.frame_count() / 2, contact};
        auto ab = ablate_frame_choice(req, indices, models);
        std::cout << "frame-choice ablation over {first, middle, contact} -> " << out_dir << "\n";
    } else if (what == "onestage") {
        if (cfg.paths.one_stage_ckpt.empty() || !fs::exists(cfg.paths.one_stage_ckpt))
            throw CheckpointError("one-stage checkpoint missing; train with `objswap train "
                                  "one-stage --config <file> --data <dir> --out <ckpt>`");
        OneStageModel os = load_one_stage(cfg.paths.one_stage_ckpt);
        VideoClip clip = load_clip(video);
        MaskedSequence ms = mask_sequence(clip.frames, clip.object_masks);
        EditResult two = run_edit(req, models);
        RefObjectImage refimg = [&] {
            Tensor img = read_png(ref);
            RefObjectImage out;
            if (img.shape[0] == 4) {
                out.rgba = img;
            } else {
                out.rgba = Tensor({4, img.shape[1], img.shape[2]});
                for (int y = 0; y < img.shape[1]; ++y)
                    for (int x = 0; x < img.shape[2]; ++x) {
                        for (int c = 0; c < 3; ++c)
                            out.rgba.at(c, y, x) = img.at(c, y, x);
                        out.rgba.at(3, y, x) = 1.0;
                    }
            }
            return out;
        }();
        GenerateOptions gopts;
        gopts.guidance_scale = req.guidance_scale;
        gopts.seed = req.seed;
        GenerateResult one = generate_one_stage(clip.frames, ms, refimg, os, models.codec, gopts);
        save_frames(two.frames, out_dir + "/two_stage");
        save_frames(one.frames, out_dir + "/one_stage");
        json j;
        j["two_stage_in_box_mse"] = in_box_mse(clip.frames, two.frames, ms.box);
        j["one_stage_in_box_mse"] = in_box_mse(clip.frames, one.frames, ms.box);
        std::ofstream(out_dir + "/onestage_compare.json") << j.dump(2) << "\n";
        write_png(out_dir + "/contact_sheet.png",
                  frame_grid({clip.frames, two.frames, one.frames}));
        std::cout << "one-stage comparison -> " << out_dir << "\n";
    } else {
        throw ValidationError("target", "unknown ablation '" + what + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reference-guided object swapping in short videos"};
    app.require_subcommand(1);
    CommonArgs common;
    app.add_option("--workers", common.workers, "compute threads (0 = library default)");

    // corpus generate
    auto* corpus = app.add_subcommand("corpus", "dataset commands")->require_subcommand(1);
    auto* gen = corpus->add_subcommand("generate", "generate a synthetic dataset");
    std::string gen_out;
    int gen_clips = -1;
    long long gen_seed = -1;
    bool gen_overwrite = false;
    gen->add_option("--config", common.config_path, "config file");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--clips", gen_clips, "override corpus.num_clips");
    gen->add_option("--seed", gen_seed, "override corpus.seed");
    gen->add_flag("--overwrite", gen_overwrite, "replace an existing non-empty directory");

    // train <target>
    auto* train = app.add_subcommand("train", "train a model");
    std::string train_target, train_data, train_out;
    train->add_option("target", train_target, "codec|stage1|stage2|one-stage")->required();
    train->add_option("--config", common.config_path, "config file");
    train->add_option("--data", train_data, "dataset directory");
    train->add_option("--out", train_out, "output checkpoint path")->required();

    // edit
    auto* edit = app.add_subcommand("edit", "swap the object in a clip");
    std::string edit_video, edit_ref, edit_anchor = "auto", edit_out;
    std::string edit_codec, edit_s1, edit_s2, edit_box;
    double edit_r = -1;
    long long edit_seed = -1;
    edit->add_option("--config", common.config_path, "config file");
    edit->add_option("--video", edit_video, "source clip directory")->required();
    edit->add_option("--ref", edit_ref, "reference object image (PNG)")->required();
    edit->add_option("--r", edit_r, "motion point sparsity in [0,100]");
    edit->add_option("--anchor", edit_anchor, "auto or a frame index");
    edit->add_option("--seed", edit_seed, "seed");
    edit->add_option("--out", edit_out, "output directory")->required();
    edit->add_option("--codec", edit_codec, "codec checkpoint");
    edit->add_option("--stage1", edit_s1, "stage-1 checkpoint");
    edit->add_option("--stage2", edit_s2, "stage-2 checkpoint");
    edit->add_option("--box", edit_box, "user box x0,y0,x1,y1");

    // eval
    auto* eval = app.add_subcommand("eval", "metrics between source and edited videos");
    std::string eval_source, eval_edited, eval_out, eval_s1, eval_box;
    eval->add_option("--config", common.config_path, "config file");
    eval->add_option("--source", eval_source, "source clip directory")->required();
    eval->add_option("--edited", eval_edited, "edited frames directory")->required();
    eval->add_option("--out", eval_out, "output CSV path")->required();
    eval->add_option("--stage1", eval_s1, "stage-1 checkpoint (embeddings)");
    eval->add_option("--box", eval_box, "evaluation box x0,y0,x1,y1");

    // ablate <target>
    auto* ablate = app.add_subcommand("ablate", "comparison harnesses");
    std::string ab_target, ab_out, ab_video, ab_ref;
    long long ab_seed = -1;
    ablate->add_option("target", ab_target, "sparsity|frame|onestage")->required();
    ablate->add_option("--config", common.config_path, "config file");
    ablate->add_option("--out", ab_out, "output directory")->required();
    ablate->add_option("--video", ab_video, "source clip directory");
    ablate->add_option("--ref", ab_ref, "reference object image");
    ablate->add_option("--seed", ab_seed, "seed");

    try {
        app.parse(argc, argv);
        apply_workers(common.workers);
        if (gen->parsed())
            return run_corpus_generate(common, gen_out, gen_clips, gen_seed, gen_overwrite);
        if (train->parsed())
            return run_train(common, train_target, train_data, train_out);
        if (edit->parsed())
            return run_edit_cmd(common, edit_video, edit_ref, edit_r, edit_anchor, edit_seed,
                                edit_out, edit_codec, edit_s1, edit_s2, edit_box);
        if (eval->parsed())
            return run_eval(common, eval_source, eval_edited, eval_out, eval_s1, eval_box);
        if (ablate->parsed())
            return run_ablate(common, ab_target, ab_out, ab_video, ab_ref, ab_seed);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        json err{{"error", {{"type", e.kind()}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        json err{{"error", {{"type", "internal"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 3;
    }
}
