#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bccn/keyframe_selector.hpp"
#include "bccn/rng.hpp"
#include "bccn/tensor.hpp"

namespace bccn {

/// T frames of C x H x W intensities in [0,1], stored frame-major.
struct VideoClip {
    std::string clip_id;
    std::size_t label = 0;
    std::size_t frames = 0, channels = 0, height = 0, width = 0;
    std::vector<float> pixels;  // T*C*H*W

    float at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
        return pixels[((t * channels + c) * height + y) * width + x];
    }
};

/// Reorders a clip into the C x T x H x W tensor the models consume.
inline Tensor clip_to_tensor(const VideoClip& clip) {
    std::vector<double> data(clip.pixels.size());
    const std::size_t plane = clip.height * clip.width;
    for (std::size_t t = 0; t < clip.frames; ++t)
        for (std::size_t c = 0; c < clip.channels; ++c) {
            const std::size_t src = (t * clip.channels + c) * plane;
            const std::size_t dst = (c * clip.frames + t) * plane;
            for (std::size_t p = 0; p < plane; ++p)
                data[dst + p] = static_cast<double>(clip.pixels[src + p]);
        }
    return Tensor::from_data({clip.channels, clip.frames, clip.height, clip.width},
                             std::move(data));
}

struct GenConfig {
    std::size_t num_classes = 6;  // first half keyframe-critical, second half motion-critical
    std::size_t clips_per_class = 40;
    std::size_t frames = 16;
    std::size_t joints = 13;
    std::size_t height = 36;
    std::size_t width = 24;
    std::uint64_t seed = 1;
    double noise_std = 0.02;

    void validate() const {
        if (num_classes != 6) {
            throw ConfigError("generator supports exactly 6 classes (3 pose + 3 motion), got " +
                              std::to_string(num_classes));
        }
        if (joints != 13) {
            throw ConfigError("generator's figure has 13 joints, got " + std::to_string(joints));
        }
        if (clips_per_class == 0 || frames < 3 || height < 16 || width < 16) {
            throw ConfigError("generator needs clips_per_class >= 1, frames >= 3, extents >= 16");
        }
        if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    }
};

struct ClipEntry {
    std::string clip_id;
    std::string video;     // path relative to the manifest directory
    std::string skeleton;  // path relative to the manifest directory
    std::size_t label = 0;
    std::size_t frames = 0;
    std::string split;  // train | val | test
    std::optional<std::size_t> key_frame;
};

struct ClipManifest {
    GenConfig config;
    std::vector<ClipEntry> clips;
};

namespace figure {

// Joint order: 0 head, 1 neck, 2 pelvis, 3/4 L/R shoulder, 5/6 L/R elbow,
// 7/8 L/R hand, 9/10 L/R knee, 11/12 L/R foot.
constexpr std::size_t kJoints = 13;
constexpr std::size_t kBones = 12;
constexpr std::size_t kBoneList[kBones][2] = {{0, 1}, {1, 2}, {1, 3}, {1, 4},  {3, 5},  {5, 7},
                                              {4, 6}, {6, 8}, {2, 9}, {9, 11}, {2, 10}, {10, 12}};

struct Pose {
    double x[kJoints];
    double y[kJoints];
};

constexpr double kThigh = 0.4, kShin = 0.4;
constexpr double kUpperArm = 0.28, kForearm = 0.27;
constexpr double kLegSwing = 0.5;   // radians
constexpr double kArmSwing = 0.15;  // radians, well below the leg swing

inline void place_legs(Pose& p, double phase) {
    const double hip_x[2] = {-0.1, 0.1};
    for (int side = 0; side < 2; ++side) {
        const double a = kLegSwing * std::sin(phase + (side == 0 ? 0.0 : M_PI));
        const std::size_t knee = 9 + static_cast<std::size_t>(side);
        const std::size_t foot = 11 + static_cast<std::size_t>(side);
        p.x[knee] = hip_x[side] + kThigh * std::sin(a);
        p.y[knee] = -kThigh * std::cos(a);
        p.x[foot] = p.x[knee] + kShin * std::sin(a);
        p.y[foot] = p.y[knee] - kShin * std::cos(a);
    }
}

inline void place_arms_swing(Pose& p, double phase) {
    for (int side = 0; side < 2; ++side) {
        // contralateral swing: the left arm follows the right leg
        const double a = kArmSwing * std::sin(phase + (side == 0 ? M_PI : 0.0));
        const std::size_t sh = 3 + static_cast<std::size_t>(side);
        const std::size_t el = 5 + static_cast<std::size_t>(side);
        const std::size_t ha = 7 + static_cast<std::size_t>(side);
        p.x[el] = p.x[sh] + kUpperArm * std::sin(a);
        p.y[el] = p.y[sh] - kUpperArm * std::cos(a);
        p.x[ha] = p.x[el] + kForearm * std::sin(a);
        p.y[ha] = p.y[el] - kForearm * std::cos(a);
    }
}

inline void place_arm_direction(Pose& p, int side, double dx, double dy) {
    const std::size_t sh = 3 + static_cast<std::size_t>(side);
    const std::size_t el = 5 + static_cast<std::size_t>(side);
    const std::size_t ha = 7 + static_cast<std::size_t>(side);
    p.x[el] = p.x[sh] + kUpperArm * dx;
    p.y[el] = p.y[sh] + kUpperArm * dy;
    p.x[ha] = p.x[el] + kForearm * dx;
    p.y[ha] = p.y[el] + kForearm * dy;
}

/// Walking pose at the given phase. strike_class >= 0 replaces the arm
/// positions with that class's signature pose; legs_phase lets the caller
/// decouple the leg cycle from the arm cycle.
inline Pose pose_at(double phase, double legs_phase, int strike_class) {
    Pose p{};
    p.x[0] = 0.0;
    p.y[0] = 0.72;  // head
    p.x[1] = 0.0;
    p.y[1] = 0.5;  // neck
    p.x[2] = 0.0;
    p.y[2] = 0.0;  // pelvis
    p.x[3] = -0.18;
    p.y[3] = 0.45;
    p.x[4] = 0.18;
    p.y[4] = 0.45;
    place_legs(p, legs_phase);
    if (strike_class < 0) {
        place_arms_swing(p, phase);
    } else if (strike_class == 0) {  // both arms raised
        place_arm_direction(p, 0, 0.0, 1.0);
        place_arm_direction(p, 1, 0.0, 1.0);
    } else if (strike_class == 1) {  // both arms out and down, kept narrow
        // enough that the post-strike settle keeps the wrists on canvas
        place_arm_direction(p, 0, -M_SQRT1_2, -M_SQRT1_2);
        place_arm_direction(p, 1, M_SQRT1_2, -M_SQRT1_2);
    } else {  // left arm raised, right arm out and down
        place_arm_direction(p, 0, 0.0, 1.0);
        place_arm_direction(p, 1, M_SQRT1_2, -M_SQRT1_2);
    }
    return p;
}

/// Depth channel: left limbs slightly near, right limbs slightly far.
inline double joint_depth(std::size_t joint) {
    switch (joint) {
        case 3:
        case 5:
        case 7:
        case 9:
        case 11:
            return 0.05;
        case 4:
        case 6:
        case 8:
        case 10:
        case 12:
            return -0.05;
        default:
            return 0.0;
    }
}

}  // namespace figure

/// Unit-space to pixel-space projection shared by the renderer and the
/// skeleton consistency checks. y points up in unit space, rows grow down.
struct FrameProjection {
    double scale;
    double center_col;
    double center_row;

    explicit FrameProjection(std::size_t height, std::size_t width)
        : scale(14.0 * static_cast<double>(std::min(height, width)) / 24.0),
          center_col((static_cast<double>(width) - 1.0) / 2.0),
          center_row(static_cast<double>(height) * 20.0 / 36.0) {}

    long col(double x) const { return std::lround(center_col + x * scale); }
    long row(double y) const { return std::lround(center_row - y * scale); }
};

namespace detail {

inline void draw_line(std::vector<float>& plane, std::size_t height, std::size_t width, long r0,
                      long c0, long r1, long c1) {
    // Bresenham, 1 px, clipped per pixel.
    const long dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
    const long sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
    long err = (dc > dr ? dc : -dr) / 2;
    long r = r0, c = c0;
    while (true) {
        if (r >= 0 && c >= 0 && r < static_cast<long>(height) && c < static_cast<long>(width)) {
            plane[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)] = 1.0f;
        }
        if (r == r1 && c == c1) break;
        const long e = err;
        if (e > -dc) {
            err -= dr;
            c += sc;
        }
        if (e < dr) {
            err += dc;
            r += sr;
        }
    }
}

}  // namespace detail

/// One generated clip and its exact-skeleton twin, before file I/O.
struct GeneratedClip {
    VideoClip video;
    SkeletonSequence skeleton;
    std::optional<std::size_t> key_frame;
};

/// Renders one clip for (label, clip RNG). Labels 0..2 walk neutrally until
/// frame t*, where the arms snap to the class pose for one frame and the
/// figure settles lower for the rest of the clip; labels 3..5 share the walk
/// and differ only in sweep direction (left/right/up).
inline GeneratedClip generate_clip(const GenConfig& cfg, std::size_t label, const std::string& id,
                                   Rng& rng) {
    const bool keyframe_class = label < 3;
    const std::size_t t_count = cfg.frames;
    std::optional<std::size_t> t_star;
    if (keyframe_class) {
        t_star = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(t_count) - 1));
    }
    const double phase0 = rng.uniform(0.0, 2.0 * M_PI);
    const double dphase = M_PI / static_cast<double>(t_count);

    double sweep_dx = 0.0, sweep_dy = 0.0;
    if (!keyframe_class) {
        if (label == 3) sweep_dx = -0.3;
        if (label == 4) sweep_dx = 0.3;
        if (label == 5) sweep_dy = 0.3;
    }

    GeneratedClip out;
    out.key_frame = t_star;
    out.video.clip_id = id;
    out.video.label = label;
    out.video.frames = t_count;
    out.video.channels = 1;
    out.video.height = cfg.height;
    out.video.width = cfg.width;
    out.video.pixels.assign(t_count * cfg.height * cfg.width, 0.0f);
    out.skeleton.clip_id = id;
    out.skeleton.label = label;
    out.skeleton.frames = t_count;
    out.skeleton.joints = figure::kJoints;
    out.skeleton.coords.assign(t_count * figure::kJoints * 3, 0.0);

    const FrameProjection proj(cfg.height, cfg.width);
    const double t_denom = static_cast<double>(t_count - 1);
    for (std::size_t t = 0; t < t_count; ++t) {
        const double phase = phase0 + static_cast<double>(t) * dphase;
        int strike = -1;
        if (t_star && t == *t_star) strike = static_cast<int>(label);
        const figure::Pose pose = figure::pose_at(phase, phase, strike);
        double ox = sweep_dx * static_cast<double>(t) / t_denom;
        double oy = sweep_dy * static_cast<double>(t) / t_denom;
        // from t* on the figure settles a quarter unit down and to the left.
        // the shift persists, so only the entry into t* pays for it, and its
        // diagonal crosses every bone's orientation, so that entry redraws the
        // whole figure and stays the clip's largest frame-to-frame change at
        // every gait phase; the arm pose alone remains unique to t*
        if (t_star && t >= *t_star) {
            ox -= 0.25;
            oy -= 0.25;
        }

        std::vector<float>& px = out.video.pixels;
        std::vector<float> plane(cfg.height * cfg.width, 0.0f);
        for (const auto& bone : figure::kBoneList) {
            const std::size_t a = bone[0], b = bone[1];
            detail::draw_line(plane, cfg.height, cfg.width, proj.row(pose.y[a] + oy),
                              proj.col(pose.x[a] + ox), proj.row(pose.y[b] + oy),
                              proj.col(pose.x[b] + ox));
        }
        for (std::size_t p = 0; p < plane.size(); ++p) {
            double v = static_cast<double>(plane[p]) + rng.normal(0.0, cfg.noise_std);
            v = std::clamp(v, 0.0, 1.0);
            px[t * plane.size() + p] = static_cast<float>(v);
        }

        for (std::size_t j = 0; j < figure::kJoints; ++j) {
            const std::size_t base = (t * figure::kJoints + j) * 3;
            out.skeleton.coords[base + 0] = pose.x[j] + ox + rng.normal(0.0, cfg.noise_std);
            out.skeleton.coords[base + 1] = pose.y[j] + oy + rng.normal(0.0, cfg.noise_std);
            out.skeleton.coords[base + 2] = figure::joint_depth(j) + rng.normal(0.0, cfg.noise_std);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Skeleton CSV: header then one row per (frame, joint), doubles at full
/// round-trip precision.
inline void save_skeleton(const std::filesystem::path& path, const SkeletonSequence& skel) {
    skel.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out << "frame_idx,joint_idx,x,y,z\n";
    char buf[96];
    for (std::size_t t = 0; t < skel.frames; ++t)
        for (std::size_t j = 0; j < skel.joints; ++j) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", t, j, skel.at(t, j, 0),
                          skel.at(t, j, 1), skel.at(t, j, 2));
            out << buf;
        }
    if (!out) throw FormatError("short write to " + path.string());
}

inline SkeletonSequence load_skeleton(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("frame_idx,joint_idx", 0) != 0) {
        throw FormatError("skeleton file " + path.string() + " lacks the expected CSV header");
    }
    struct Row {
        std::size_t t, j;
        double x, y, z;
    };
    std::vector<Row> rows;
    std::size_t t_max = 0, j_max = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Row r;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf,%lf", &r.t, &r.j, &r.x, &r.y, &r.z) != 5) {
            throw FormatError("skeleton file " + path.string() + " line " +
                              std::to_string(line_no) + " is not frame,joint,x,y,z");
        }
        if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.z)) {
            throw ValueError("skeleton file " + path.string() + " line " +
                             std::to_string(line_no) + " has a non-finite coordinate");
        }
        t_max = std::max(t_max, r.t);
        j_max = std::max(j_max, r.j);
        rows.push_back(r);
    }
    if (rows.empty()) throw FormatError("skeleton file " + path.string() + " has no data rows");

    SkeletonSequence skel;
    skel.clip_id = path.stem().string();
    skel.frames = t_max + 1;
    skel.joints = j_max + 1;
    skel.coords.assign(skel.frames * skel.joints * 3, 0.0);
    std::vector<char> seen(skel.frames * skel.joints, 0);
    for (const Row& r : rows) {
        const std::size_t cell = r.t * skel.joints + r.j;
        seen[cell] = 1;
        skel.coords[cell * 3 + 0] = r.x;
        skel.coords[cell * 3 + 1] = r.y;
        skel.coords[cell * 3 + 2] = r.z;
    }
    for (std::size_t t = 0; t < skel.frames; ++t)
        for (std::size_t j = 0; j < skel.joints; ++j) {
            if (!seen[t * skel.joints + j]) {
                throw FormatError("skeleton file " + path.string() + " missing row for frame " +
                                  std::to_string(t) + ", joint " + std::to_string(j));
            }
        }
    return skel;
}

/// Clip container: one JSON header line, then T*C*H*W little-endian float32.
inline void save_clip_file(const std::filesystem::path& path, const VideoClip& clip) {
    nlohmann::ordered_json header;
    header["clip_id"] = clip.clip_id;
    header["label"] = clip.label;
    header["frames"] = clip.frames;
    header["channels"] = clip.channels;
    header["height"] = clip.height;
    header["width"] = clip.width;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(clip.pixels.data()),
              static_cast<std::streamsize>(clip.pixels.size() * sizeof(float)));
    if (!out) throw FormatError("short write to " + path.string());
}

inline VideoClip load_clip_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("missing header line in " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad clip header in " + path.string() + ": " + e.what());
    }
    VideoClip clip;
    try {
        clip.clip_id = header.at("clip_id").get<std::string>();
        clip.label = header.at("label").get<std::size_t>();
        clip.frames = header.at("frames").get<std::size_t>();
        clip.channels = header.at("channels").get<std::size_t>();
        clip.height = header.at("height").get<std::size_t>();
        clip.width = header.at("width").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad clip header in " + path.string() + ": " + e.what());
    }
    clip.pixels.resize(clip.frames * clip.channels * clip.height * clip.width);
    in.read(reinterpret_cast<char*>(clip.pixels.data()),
            static_cast<std::streamsize>(clip.pixels.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != clip.pixels.size() * sizeof(float)) {
        throw FormatError("clip file " + path.string() + " truncated");
    }
    for (float v : clip.pixels) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ValueError("clip file " + path.string() + " has an intensity outside [0,1]");
        }
    }
    return clip;
}

inline void save_manifest(const std::filesystem::path& path, const ClipManifest& manifest) {
    nlohmann::ordered_json j;
    j["config"] = {{"num_classes", manifest.config.num_classes},
                   {"clips_per_class", manifest.config.clips_per_class},
                   {"frames", manifest.config.frames},
                   {"joints", manifest.config.joints},
                   {"height", manifest.config.height},
                   {"width", manifest.config.width},
                   {"seed", manifest.config.seed},
                   {"noise_std", manifest.config.noise_std}};
    auto rows = nlohmann::ordered_json::array();
    for (const ClipEntry& e : manifest.clips) {
        nlohmann::ordered_json row;
        row["clip_id"] = e.clip_id;
        row["video"] = e.video;
        row["skeleton"] = e.skeleton;
        row["label"] = e.label;
        row["frames"] = e.frames;
        row["split"] = e.split;
        if (e.key_frame) {
            row["key_frame"] = *e.key_frame;
        } else {
            row["key_frame"] = nullptr;
        }
        rows.push_back(std::move(row));
    }
    j["clips"] = std::move(rows);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

inline ClipManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest " + path.string() + ": " + e.what());
    }
    ClipManifest m;
    try {
        const auto& c = j.at("config");
        m.config.num_classes = c.at("num_classes").get<std::size_t>();
        m.config.clips_per_class = c.at("clips_per_class").get<std::size_t>();
        m.config.frames = c.at("frames").get<std::size_t>();
        m.config.joints = c.at("joints").get<std::size_t>();
        m.config.height = c.at("height").get<std::size_t>();
        m.config.width = c.at("width").get<std::size_t>();
        m.config.seed = c.at("seed").get<std::uint64_t>();
        m.config.noise_std = c.at("noise_std").get<double>();
        for (const auto& row : j.at("clips")) {
            ClipEntry e;
            e.clip_id = row.at("clip_id").get<std::string>();
            e.video = row.at("video").get<std::string>();
            e.skeleton = row.at("skeleton").get<std::string>();
            e.label = row.at("label").get<std::size_t>();
            e.frames = row.at("frames").get<std::size_t>();
            e.split = row.at("split").get<std::string>();
            if (!row.at("key_frame").is_null()) e.key_frame = row.at("key_frame").get<std::size_t>();
            m.clips.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest " + path.string() + ": " + e.what());
    }
    return m;
}

/// Loads one manifest entry; the two modalities must agree on T.
inline std::pair<VideoClip, SkeletonSequence> load_clip(const std::filesystem::path& manifest_dir,
                                                        const ClipEntry& entry) {
    VideoClip clip = load_clip_file(manifest_dir / entry.video);
    SkeletonSequence skel = load_skeleton(manifest_dir / entry.skeleton);
    skel.label = entry.label;
    if (clip.frames != skel.frames || clip.frames != entry.frames) {
        throw FormatError("clip '" + entry.clip_id + "': video has " +
                          std::to_string(clip.frames) + " frames, skeleton " +
                          std::to_string(skel.frames) + ", manifest " +
                          std::to_string(entry.frames));
    }
    return {std::move(clip), std::move(skel)};
}

/// Generates the dataset under out_dir and writes manifest.json there.
/// Split sizes per class: 15% test, 15% val (at least 1 each), rest train.
inline ClipManifest generate_dataset(const GenConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw FormatError("cannot create output directory " + out_dir.string());

    ClipManifest manifest;
    manifest.config = cfg;
    const std::size_t n = cfg.clips_per_class;
    std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                      std::lround(0.15 * static_cast<double>(n))));
    std::size_t n_val = n_test;
    if (n_test + n_val >= n) {
        n_test = n > 1 ? 1 : 0;
        n_val = n > 2 ? 1 : 0;
    }
    const std::size_t n_train = n - n_test - n_val;

    std::size_t global = 0;
    for (std::size_t label = 0; label < cfg.num_classes; ++label) {
        for (std::size_t i = 0; i < n; ++i, ++global) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof idbuf, "c%zu_%03zu", label, i);
            Rng rng = Rng::child(cfg.seed, global);
            GeneratedClip gen = generate_clip(cfg, label, idbuf, rng);
            ClipEntry entry;
            entry.clip_id = idbuf;
            entry.video = std::string(idbuf) + ".clip";
            entry.skeleton = std::string(idbuf) + ".csv";
            entry.label = label;
            entry.frames = cfg.frames;
            entry.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
            entry.key_frame = gen.key_frame;
            save_clip_file(out_dir / entry.video, gen.video);
            save_skeleton(out_dir / entry.skeleton, gen.skeleton);
            manifest.clips.push_back(std::move(entry));
        }
    }
    save_manifest(out_dir / "manifest.json", manifest);
    return manifest;
}

/// Bilinear resize per frame and channel; output intensities stay in [0,1]
/// because every sample is a convex combination of inputs.
inline VideoClip resize_frames(const VideoClip& clip, std::size_t new_h, std::size_t new_w) {
    if (new_h == 0 || new_w == 0) throw ValueError("resize_frames: target extents must be positive");
    if (new_h == clip.height && new_w == clip.width) return clip;
    VideoClip out = clip;
    out.height = new_h;
    out.width = new_w;
    out.pixels.assign(clip.frames * clip.channels * new_h * new_w, 0.0f);
    const double sy = static_cast<double>(clip.height) / static_cast<double>(new_h);
    const double sx = static_cast<double>(clip.width) / static_cast<double>(new_w);
    for (std::size_t t = 0; t < clip.frames; ++t)
        for (std::size_t c = 0; c < clip.channels; ++c) {
            const std::size_t src_base = (t * clip.channels + c) * clip.height * clip.width;
            const std::size_t dst_base = (t * clip.channels + c) * new_h * new_w;
            for (std::size_t y = 0; y < new_h; ++y) {
                double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
                fy = std::clamp(fy, 0.0, static_cast<double>(clip.height - 1));
                const std::size_t y0 = static_cast<std::size_t>(fy);
                const std::size_t y1 = std::min(y0 + 1, clip.height - 1);
                const double wy = fy - static_cast<double>(y0);
                for (std::size_t x = 0; x < new_w; ++x) {
                    double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
                    fx = std::clamp(fx, 0.0, static_cast<double>(clip.width - 1));
                    const std::size_t x0 = static_cast<std::size_t>(fx);
                    const std::size_t x1 = std::min(x0 + 1, clip.width - 1);
                    const double wx = fx - static_cast<double>(x0);
                    const double v00 = clip.pixels[src_base + y0 * clip.width + x0];
                    const double v01 = clip.pixels[src_base + y0 * clip.width + x1];
                    const double v10 = clip.pixels[src_base + y1 * clip.width + x0];
                    const double v11 = clip.pixels[src_base + y1 * clip.width + x1];
                    const double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                     wy * ((1.0 - wx) * v10 + wx * v11);
                    out.pixels[dst_base + y * new_w + x] = static_cast<float>(v);
                }
            }
        }
    return out;
}

}  // namespace bccn
