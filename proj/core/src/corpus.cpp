#include "objswap/corpus.hpp"

#include "objswap/bbox.hpp"
#include "objswap/errors.hpp"
#include "objswap/png_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace objswap {

const char* shape_name(ObjectShape s) {
    switch (s) {
        case ObjectShape::disk: return "disk";
        case ObjectShape::square: return "square";
        case ObjectShape::mug: return "mug";
        case ObjectShape::bottle: return "bottle";
        case ObjectShape::kettle: return "kettle";
    }
    return "?";
}

ObjectShape shape_from_name(const std::string& name) {
    for (ObjectShape s : {ObjectShape::disk, ObjectShape::square, ObjectShape::mug,
                          ObjectShape::bottle, ObjectShape::kettle})
        if (name == shape_name(s))
            return s;
    throw ValidationError("object_shape", "unknown shape '" + name + "'");
}

void SceneSpec::validate() const {
    if (num_frames < 2)
        throw ValidationError("num_frames", "must be >= 2");
    if (grasp_frame < 0 || grasp_frame >= num_frames)
        throw ValidationError("grasp_frame", "must be in [0, num_frames)");
    if ((int)trajectory.size() != num_frames)
        throw ValidationError("trajectory", "length must equal num_frames");
    if (frame_h < 16 || frame_w < 16)
        throw ValidationError("frame_size", "must be at least 16x16");
    for (const auto& [x, y] : trajectory)
        if (x < 0 || x >= frame_w || y < 0 || y >= frame_h)
            throw ValidationError("trajectory", "point (" + std::to_string(x) + "," +
                                                    std::to_string(y) + ") outside frame bounds");
    auto bad = [](double v) { return v < 0.0 || v > 1.0; };
    if (bad(object_color.r) || bad(object_color.g) || bad(object_color.b))
        throw ValidationError("object_color", "components must be in [0,1]");
}

namespace {

// ---- object silhouettes ---------------------------------------------------

// Shape support functions on a centered canvas; `s` is the base size in px.
bool inside_shape(ObjectShape shape, double s, double x, double y) {
    switch (shape) {
        case ObjectShape::disk: {
            double r = s * 0.5;
            return x * x + y * y <= r * r;
        }
        case ObjectShape::square:
            return std::fabs(x) <= s * 0.5 && std::fabs(y) <= s * 0.5;
        case ObjectShape::mug: {
            double w = s * 0.8, h = s * 0.9;
            bool body = std::fabs(x) <= w * 0.5 && std::fabs(y) <= h * 0.5;
            double hx = x - w * 0.5, rr = std::sqrt(hx * hx + y * y);
            bool handle = hx >= 0 && rr >= s * 0.18 && rr <= s * 0.34 && std::fabs(y) <= s * 0.34;
            return body || handle;
        }
        case ObjectShape::bottle: {
            double w = s * 0.55, h = s * 0.95;
            bool body = std::fabs(x) <= w * 0.5 && y >= -h * 0.15 && y <= h * 0.5;
            bool neck = std::fabs(x) <= w * 0.22 && y >= -h * 0.5 && y < -h * 0.15;
            return body || neck;
        }
        case ObjectShape::kettle: {
            double h = s * 0.75;
            // trapezoid body, wider at the bottom
            double half_w = s * (0.28 + 0.22 * (y / h + 0.5));
            bool body = y >= -h * 0.5 && y <= h * 0.5 && std::fabs(x) <= half_w;
            bool spout = y >= -h * 0.15 && y <= h * 0.15 &&
                         x >= half_w && x <= half_w + s * 0.22 - std::fabs(y);
            double ty = y + h * 0.5, rr = std::sqrt(x * x + ty * ty);
            bool arc = rr >= s * 0.25 && rr <= s * 0.4 && y < -h * 0.35;
            return body || spout || arc;
        }
    }
    return false;
}

Tensor render_sprite(ObjectShape shape, double size_px, double rot, const Rgb& color) {
    int canvas = (int)std::ceil(size_px * 1.6) + 4;
    double c = (canvas - 1) * 0.5;
    double cr = std::cos(rot), sr = std::sin(rot);
    Tensor rgba({4, canvas, canvas});
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) {
            double dx = x - c, dy = y - c;
            double ux = cr * dx + sr * dy, uy = -sr * dx + cr * dy;
            if (inside_shape(shape, size_px, ux, uy)) {
                rgba.at(0, y, x) = color.r;
                rgba.at(1, y, x) = color.g;
                rgba.at(2, y, x) = color.b;
                rgba.at(3, y, x) = 1.0;
            }
        }
    // tight crop
    Tensor alpha({canvas, canvas});
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x)
            alpha.at(y, x) = rgba.at(3, y, x);
    BBox b = bbox_from_mask(alpha);
    Tensor out({4, b.height(), b.width()});
    for (int ch = 0; ch < 4; ++ch)
        for (int y = 0; y < b.height(); ++y)
            for (int x = 0; x < b.width(); ++x)
                out.at(ch, y, x) = rgba.at(ch, b.y0 + y, b.x0 + x);
    return out;
}

// ---- gripper geometry -----------------------------------------------------

struct HandRect {
    // unclipped half-open rect in frame coords
    int x0, y0, x1, y1;
};

enum class ApproachDir { from_right, from_left, from_below, from_above };

struct GripperGeom {
    ApproachDir dir;
    int finger_thickness;
    int palm_thickness;
    int arm_thickness;
    int arm_length;
    int open_extra;  // extra aperture opening before grasp
    Rgb color;
};

// Rects for the gripper around object bbox `ob`, shifted `gap` px away from
// the object along the approach direction; `closed` selects the grasp
// aperture (1 px finger overlap) vs the open one.
std::vector<HandRect> gripper_rects(const BBox& ob, const GripperGeom& g, int gap, bool closed) {
    // Build for "from_right" in (u,v) coords where u grows toward the hand
    // side and v is the perpendicular axis, then map to frame coords.
    bool horizontal = g.dir == ApproachDir::from_right || g.dir == ApproachDir::from_left;
    int u0, u1, v0, v1;  // object bbox in (u,v)
    if (horizontal) {
        v0 = ob.y0;
        v1 = ob.y1;
        u0 = ob.x0;
        u1 = ob.x1;
    } else {
        v0 = ob.x0;
        v1 = ob.x1;
        u0 = ob.y0;
        u1 = ob.y1;
    }
    bool flip = g.dir == ApproachDir::from_left || g.dir == ApproachDir::from_above;

    int ft = g.finger_thickness, pw = g.palm_thickness;
    int open_off = closed ? -1 : g.open_extra;  // inner finger edge offset from object edge
    int fl = (u1 - u0) * 7 / 10 + 2;

    struct RectUV {
        int ua, ub, va, vb;
    };
    std::vector<RectUV> uv;
    // fingers run along u, ending at the palm face (u = u1 + gap)
    uv.push_back({u1 - fl + gap, u1 + gap, v0 - open_off - ft, v0 - open_off});          // low-v finger
    uv.push_back({u1 - fl + gap, u1 + gap, v1 + open_off, v1 + open_off + ft});          // high-v finger
    uv.push_back({u1 + gap, u1 + gap + pw, v0 - g.open_extra - ft, v1 + g.open_extra + ft});  // palm
    int vc = (v0 + v1) / 2;
    uv.push_back({u1 + gap + pw, u1 + gap + pw + g.arm_length, vc - g.arm_thickness / 2,
                  vc - g.arm_thickness / 2 + g.arm_thickness});  // arm

    std::vector<HandRect> out;
    for (const auto& r : uv) {
        int ua = r.ua, ub = r.ub;
        if (flip) {  // mirror across the object span [u0,u1)
            int na = u0 + u1 - ub, nb = u0 + u1 - ua;
            ua = na;
            ub = nb;
        }
        if (horizontal)
            out.push_back({ua, r.va, ub, r.vb});
        else
            out.push_back({r.va, ua, r.vb, ub});
    }
    return out;
}

void draw_rect(Tensor& frame, Tensor& mask, const HandRect& r, const Rgb& color) {
    int h = image_height(frame), w = image_width(frame);
    for (int y = std::max(0, r.y0); y < std::min(h, r.y1); ++y)
        for (int x = std::max(0, r.x0); x < std::min(w, r.x1); ++x) {
            frame.at(0, y, x) = color.r;
            frame.at(1, y, x) = color.g;
            frame.at(2, y, x) = color.b;
            mask.at(y, x) = 1.0;
        }
}

BBox object_bbox_at(const Tensor& sprite, int cx, int cy) {
    int sh = image_height(sprite), sw = image_width(sprite);
    int x0 = cx - sw / 2, y0 = cy - sh / 2;
    return {x0, y0, x0 + sw, y0 + sh};
}

}  // namespace

bool masks_in_contact(const Tensor& hand_mask, const Tensor& object_mask, int dilation_radius) {
    return masks_intersect(dilate(hand_mask, dilation_radius), object_mask);
}

VideoClip generate_clip(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.rng_seed, "clip");

    // background: flat low-saturation color plus two low-frequency gratings
    double bg_h = rng.uniform(), bg_s = rng.uniform(0.05, 0.25), bg_v = rng.uniform(0.3, 0.7);
    Rgb bg = hsv_to_rgb(bg_h, bg_s, bg_v);
    double fx1 = rng.uniform(0.3, 1.2), fy1 = rng.uniform(0.3, 1.2), ph1 = rng.uniform(0, 6.28);
    double fx2 = rng.uniform(0.8, 2.0), fy2 = rng.uniform(0.8, 2.0), ph2 = rng.uniform(0, 6.28);

    int H = spec.frame_h, W = spec.frame_w;
    Tensor background({3, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double n = 0.03 * std::cos((fx1 * x + fy1 * y) * 6.28318 / W + ph1) +
                       0.02 * std::cos((fx2 * x + fy2 * y) * 6.28318 / W + ph2);
            background.at(0, y, x) = std::clamp(bg.r + n, 0.0, 1.0);
            background.at(1, y, x) = std::clamp(bg.g + n, 0.0, 1.0);
            background.at(2, y, x) = std::clamp(bg.b + n, 0.0, 1.0);
        }

    double size_px = rng.uniform(10.0, 16.0);
    double rot = rng.uniform(-0.6, 0.6);
    Tensor sprite = render_sprite(spec.object_shape, size_px, rot, spec.object_color);

    GripperGeom geom;
    geom.dir = (ApproachDir)rng.uniform_int(0, 3);
    geom.finger_thickness = rng.uniform_int(2, 3);
    geom.palm_thickness = 2;
    geom.arm_thickness = 3;
    geom.arm_length = std::max(H, W);
    geom.open_extra = kContactDilationRadius + 1;
    double hh = rng.uniform(kHandHueLo + 0.01, kHandHueHi - 0.01);
    geom.color = hsv_to_rgb(hh, rng.uniform(0.6, 0.9), rng.uniform(0.55, 0.9));

    const int gap_step = kContactDilationRadius + 2;

    VideoClip clip;
    clip.metadata = spec;
    clip.object_sprite = sprite;

    std::vector<std::vector<HandRect>> rects_per_frame;
    for (int i = 0; i < spec.num_frames; ++i) {
        auto [cx, cy] = spec.trajectory[i];
        BBox ob = object_bbox_at(sprite, cx, cy);
        int gap = gap_step * std::max(0, spec.grasp_frame - i);
        bool closed = i >= spec.grasp_frame;
        rects_per_frame.push_back(gripper_rects(ob, geom, gap, closed));

        Tensor frame = background;
        Tensor obj_mask({H, W});
        Tensor hand_mask({H, W});

        // object
        int sx0 = ob.x0, sy0 = ob.y0;
        for (int y = 0; y < image_height(sprite); ++y)
            for (int x = 0; x < image_width(sprite); ++x) {
                if (sprite.at(3, y, x) <= 0.5)
                    continue;
                int fy = sy0 + y, fxp = sx0 + x;
                if (fy < 0 || fy >= H || fxp < 0 || fxp >= W)
                    throw ValidationError("trajectory", "object extends outside frame at frame " +
                                                            std::to_string(i));
                frame.at(0, fy, fxp) = sprite.at(0, y, x);
                frame.at(1, fy, fxp) = sprite.at(1, y, x);
                frame.at(2, fy, fxp) = sprite.at(2, y, x);
                obj_mask.at(fy, fxp) = 1.0;
            }

        // gripper on top (it may occlude the object)
        for (const auto& r : rects_per_frame.back())
            draw_rect(frame, hand_mask, r, geom.color);
        for (int64_t k = 0; k < obj_mask.numel(); ++k)
            if (hand_mask[k] > 0.5)
                obj_mask[k] = 0.0;

        clip.frames.push_back(std::move(frame));
        clip.object_masks.push_back(std::move(obj_mask));
        clip.hand_masks.push_back(std::move(hand_mask));
    }

    for (int i = 0; i < spec.num_frames; ++i) {
        bool contact = masks_in_contact(clip.hand_masks[i], clip.object_masks[i]);
        bool expected = i >= spec.grasp_frame;
        if (contact != expected)
            throw ValidationError("grasp_frame", "hand geometry cannot realize the requested "
                                                 "contact pattern at frame " + std::to_string(i));
        clip.contact_flags.push_back(contact);
    }

    // exact forward flow from generator-known motion
    for (int i = 0; i + 1 < spec.num_frames; ++i) {
        Tensor flow({2, H, W});
        auto [cx0, cy0] = spec.trajectory[i];
        auto [cx1, cy1] = spec.trajectory[i + 1];
        double odx = cx1 - cx0, ody = cy1 - cy0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (clip.object_masks[i].at(y, x) > 0.5) {
                    flow.at(0, y, x) = odx;
                    flow.at(1, y, x) = ody;
                }
        // hand pixels move with the rect that rendered them (fingers shift
        // relative to the body on the closing step)
        const auto& ra = rects_per_frame[i];
        const auto& rb = rects_per_frame[i + 1];
        for (size_t k = 0; k < ra.size(); ++k) {
            double hdx = rb[k].x0 - ra[k].x0, hdy = rb[k].y0 - ra[k].y0;
            for (int y = std::max(0, ra[k].y0); y < std::min(H, ra[k].y1); ++y)
                for (int x = std::max(0, ra[k].x0); x < std::min(W, ra[k].x1); ++x)
                    if (clip.hand_masks[i].at(y, x) > 0.5) {
                        flow.at(0, y, x) = hdx;
                        flow.at(1, y, x) = hdy;
                    }
        }
        clip.gt_flow.push_back(std::move(flow));
    }
    return clip;
}

// ---- dataset io -------------------------------------------------------------

namespace {

std::string zero_pad(int v, int width) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%0*d", width, v);
    return buf;
}

json spec_to_json(const SceneSpec& s) {
    json j;
    j["object_shape"] = shape_name(s.object_shape);
    j["object_color"] = {s.object_color.r, s.object_color.g, s.object_color.b};
    json traj = json::array();
    for (auto& [x, y] : s.trajectory)
        traj.push_back({x, y});
    j["trajectory"] = traj;
    j["grasp_frame"] = s.grasp_frame;
    j["frame_size"] = {s.frame_h, s.frame_w};
    j["num_frames"] = s.num_frames;
    j["rng_seed"] = s.rng_seed;
    return j;
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec s;
    s.object_shape = shape_from_name(j.at("object_shape").get<std::string>());
    auto col = j.at("object_color");
    s.object_color = {col.at(0).get<double>(), col.at(1).get<double>(), col.at(2).get<double>()};
    for (const auto& p : j.at("trajectory"))
        s.trajectory.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    s.grasp_frame = j.at("grasp_frame").get<int>();
    s.frame_h = j.at("frame_size").at(0).get<int>();
    s.frame_w = j.at("frame_size").at(1).get<int>();
    s.num_frames = j.at("num_frames").get<int>();
    s.rng_seed = j.at("rng_seed").get<uint64_t>();
    return s;
}

Tensor mask_to_image(const Tensor& mask) {
    Tensor img({1, mask.shape[0], mask.shape[1]});
    for (int64_t i = 0; i < mask.numel(); ++i)
        img[i] = mask[i] > 0.5 ? 1.0 : 0.0;
    return img;
}

Tensor image_to_mask(const Tensor& img) {
    Tensor mask({img.shape[1], img.shape[2]});
    for (int64_t i = 0; i < mask.numel(); ++i)
        mask[i] = img[i] > 0.5 ? 1.0 : 0.0;
    return mask;
}

}  // namespace

void write_flow_file(const std::string& path, const Tensor& flow) {
    int h = flow.shape[1], w = flow.shape[2];
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot open for write: " + path);
    std::vector<float> buf((size_t)h * w * 2);
    size_t k = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            buf[k++] = (float)flow.at(0, y, x);
            buf[k++] = (float)flow.at(1, y, x);
        }
    f.write((const char*)buf.data(), (std::streamsize)(buf.size() * sizeof(float)));
    if (!f)
        throw IoError("short write: " + path);
}

Tensor read_flow_file(const std::string& path, int h, int w) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open: " + path);
    std::vector<float> buf((size_t)h * w * 2);
    f.read((char*)buf.data(), (std::streamsize)(buf.size() * sizeof(float)));
    if (f.gcount() != (std::streamsize)(buf.size() * sizeof(float)))
        throw IoError("flow file too short: " + path);
    Tensor flow({2, h, w});
    size_t k = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            flow.at(0, y, x) = buf[k++];
            flow.at(1, y, x) = buf[k++];
        }
    return flow;
}

void save_clip(const VideoClip& clip, const std::string& clip_dir) {
    fs::create_directories(clip_dir);
    int n = clip.frame_count();
    for (int i = 0; i < n; ++i) {
        write_png(clip_dir + "/frame_" + zero_pad(i, 4) + ".png", clip.frames[i]);
        write_png(clip_dir + "/obj_mask_" + zero_pad(i, 4) + ".png", mask_to_image(clip.object_masks[i]));
        write_png(clip_dir + "/hand_mask_" + zero_pad(i, 4) + ".png", mask_to_image(clip.hand_masks[i]));
        if (i + 1 < n)
            write_flow_file(clip_dir + "/flow_" + zero_pad(i, 4) + ".bin", clip.gt_flow[i]);
    }
    write_png(clip_dir + "/sprite.png", clip.object_sprite);
    json meta;
    meta["spec"] = spec_to_json(clip.metadata);
    meta["contact_flags"] = clip.contact_flags;
    meta["split"] = clip.split;
    meta["instance_id"] = clip.instance_id;
    std::ofstream f(clip_dir + "/meta.json", std::ios::trunc);
    f << meta.dump(2) << "\n";
}

VideoClip load_clip(const std::string& clip_dir) {
    std::ifstream mf(clip_dir + "/meta.json");
    if (!mf)
        throw IoError("missing meta.json in " + clip_dir);
    json meta = json::parse(mf);
    VideoClip clip;
    clip.metadata = spec_from_json(meta.at("spec"));
    clip.split = meta.value("split", "");
    clip.instance_id = meta.value("instance_id", -1);
    clip.id = fs::path(clip_dir).filename().string();
    int n = clip.metadata.num_frames;
    for (int i = 0; i < n; ++i) {
        clip.frames.push_back(read_png(clip_dir + "/frame_" + zero_pad(i, 4) + ".png"));
        clip.object_masks.push_back(
            image_to_mask(read_png(clip_dir + "/obj_mask_" + zero_pad(i, 4) + ".png")));
        clip.hand_masks.push_back(
            image_to_mask(read_png(clip_dir + "/hand_mask_" + zero_pad(i, 4) + ".png")));
    }
    int h = clip.height(), w = clip.width();
    for (int i = 0; i + 1 < n; ++i)
        clip.gt_flow.push_back(read_flow_file(clip_dir + "/flow_" + zero_pad(i, 4) + ".bin", h, w));
    clip.object_sprite = read_png(clip_dir + "/sprite.png");
    for (bool b : meta.at("contact_flags").get<std::vector<bool>>())
        clip.contact_flags.push_back(b);
    return clip;
}

std::string clip_dir_for(const std::string& dataset_dir, const std::string& clip_id) {
    return dataset_dir + "/clips/" + clip_id;
}

std::vector<DatasetIndex::Entry> DatasetIndex::with_split(const std::string& split) const {
    std::vector<Entry> out;
    for (const auto& e : clips)
        if (e.split == split)
            out.push_back(e);
    return out;
}

void generate_corpus(const CorpusConfig& config, const std::string& out_dir) {
    if (config.num_clips < 1)
        throw ValidationError("num_clips", "must be >= 1");
    if (config.eval_fraction < 0.0 || config.eval_fraction >= 1.0)
        throw ValidationError("eval_fraction", "must be in [0,1)");
    fs::path out(out_dir);
    if (fs::exists(out) && !fs::is_empty(out) && !config.overwrite)
        throw ValidationError("out", "output path exists and is not empty (pass overwrite)");
    if (config.overwrite && fs::exists(out))
        fs::remove_all(out);
    fs::create_directories(out / "clips");

    // Object instances: a (shape, color, size rotation) identity reused across
    // clips; the train/eval split cuts across instances so eval objects are
    // unseen during training.
    Rng rng(config.seed, "corpus");
    int num_instances = std::max(5, config.num_clips / 6);
    struct Instance {
        ObjectShape shape;
        Rgb color;
        std::string split;
    };
    std::vector<Instance> instances;
    for (int i = 0; i < num_instances; ++i) {
        Instance inst;
        inst.shape = (ObjectShape)(i % 5);
        double u = rng.uniform(0.0, 0.72);
        double hue = u < 0.46 ? u : u + 0.28;  // skip the reserved hand band
        inst.color = hsv_to_rgb(hue, rng.uniform(0.55, 0.95), rng.uniform(0.45, 0.95));
        instances.push_back(inst);
    }
    int eval_count = (int)std::lround(config.eval_fraction * num_instances);
    eval_count = std::clamp(eval_count, config.eval_fraction > 0 ? 1 : 0, num_instances - 1);
    std::vector<int> order(num_instances);
    for (int i = 0; i < num_instances; ++i)
        order[i] = i;
    for (int i = num_instances - 1; i > 0; --i)
        std::swap(order[i], order[(int)rng.uniform_index((uint64_t)i + 1)]);
    for (int k = 0; k < num_instances; ++k)
        instances[order[k]].split = k < eval_count ? "eval" : "train";

    int H = config.frame_size, W = config.frame_size;
    DatasetIndex index;
    json jclips = json::array();
    for (int ci = 0; ci < config.num_clips; ++ci) {
        Rng crng(config.seed, (uint64_t)ci + 1000);
        int inst_id = (int)crng.uniform_index((uint64_t)num_instances);
        const Instance& inst = instances[inst_id];

        SceneSpec spec;
        spec.object_shape = inst.shape;
        spec.object_color = inst.color;
        spec.frame_h = H;
        spec.frame_w = W;
        spec.num_frames = config.num_frames;
        spec.rng_seed = crng.next_u64();
        // late grasp: contact frames are a strict suffix and the middle frame
        // stays contact-free
        int lo = (int)std::ceil(config.num_frames * 0.6);
        int hi = (int)std::floor(config.num_frames * 0.8);
        spec.grasp_frame = crng.uniform_int(std::min(lo, config.num_frames - 2),
                                            std::min(hi, config.num_frames - 2));

        // static until grasp, then an integer random walk that keeps the
        // sprite inside the frame with margin
        int margin = 14;
        int cx = crng.uniform_int(margin, W - 1 - margin);
        int cy = crng.uniform_int(margin, H - 1 - margin);
        int vx = crng.uniform_int(-2, 2), vy = crng.uniform_int(-2, 2);
        if (vx == 0 && vy == 0)
            vx = 1 + crng.uniform_int(0, 1);
        for (int i = 0; i < config.num_frames; ++i) {
            spec.trajectory.emplace_back(cx, cy);
            if (i >= spec.grasp_frame) {
                cx = std::clamp(cx + vx, margin, W - 1 - margin);
                cy = std::clamp(cy + vy, margin, H - 1 - margin);
            }
        }

        VideoClip clip = generate_clip(spec);
        clip.id = "clip_" + zero_pad(ci, 4);
        clip.split = inst.split;
        clip.instance_id = inst_id;
        save_clip(clip, clip_dir_for(out_dir, clip.id));

        DatasetIndex::Entry e{clip.id, clip.split, shape_name(inst.shape), inst_id};
        index.clips.push_back(e);
        jclips.push_back({{"id", e.id}, {"split", e.split}, {"shape", e.shape}, {"instance_id", e.instance_id}});
    }

    json jindex;
    jindex["version"] = 1;
    jindex["num_clips"] = config.num_clips;
    jindex["frame_size"] = config.frame_size;
    jindex["num_frames"] = config.num_frames;
    jindex["seed"] = config.seed;
    jindex["eval_fraction"] = config.eval_fraction;
    jindex["clips"] = jclips;
    std::ofstream f(out / "index.json", std::ios::trunc);
    f << jindex.dump(2) << "\n";
}

DatasetIndex load_index(const std::string& dataset_dir) {
    std::ifstream f(dataset_dir + "/index.json");
    if (!f)
        throw IoError("missing index.json in " + dataset_dir);
    json j = json::parse(f);
    DatasetIndex index;
    index.frame_size = j.value("frame_size", 0);
    index.num_frames = j.value("num_frames", 0);
    for (const auto& e : j.at("clips"))
        index.clips.push_back({e.at("id").get<std::string>(), e.at("split").get<std::string>(),
                               e.at("shape").get<std::string>(), e.at("instance_id").get<int>()});
    return index;
}

}  // namespace objswap
