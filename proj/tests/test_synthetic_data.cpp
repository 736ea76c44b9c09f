#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "bccn/rng.hpp"
#include "bccn/synthetic_data.hpp"
#include "bccn/tensor.hpp"

using namespace bccn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("bccn_data_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

GenConfig small_config() {
    GenConfig cfg;
    cfg.clips_per_class = 3;
    cfg.frames = 8;
    cfg.height = 16;
    cfg.width = 16;
    cfg.seed = 5;
    return cfg;
}

double frame_l1(const VideoClip& v, std::size_t a, std::size_t b) {
    const std::size_t plane = v.channels * v.height * v.width;
    double total = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
        total += std::abs(static_cast<double>(v.pixels[a * plane + p]) -
                          static_cast<double>(v.pixels[b * plane + p]));
    }
    return total;
}

double skeleton_l1(const SkeletonSequence& s, std::size_t a, std::size_t b) {
    double total = 0.0;
    for (std::size_t j = 0; j < s.joints; ++j)
        for (int axis = 0; axis < 3; ++axis)
            total += std::abs(s.at(a, j, axis) - s.at(b, j, axis));
    return total;
}

std::size_t max_change_frame(const std::vector<double>& pair_l1) {
    // index of the largest change, reported as the later frame of the pair
    std::size_t best = 0;
    for (std::size_t i = 1; i < pair_l1.size(); ++i)
        if (pair_l1[i] > pair_l1[best]) best = i;
    return best + 1;
}

/// Rule-based decision procedure over the skeleton alone. It must score 100%
/// on noiseless data or the class structure the models rely on is broken.
std::size_t classify_by_construction(const GeneratedClip& g) {
    const SkeletonSequence& s = g.skeleton;
    const std::size_t last = s.frames - 1;
    const double drift_x = s.at(last, 2, 0) - s.at(0, 2, 0);
    const double drift_y = s.at(last, 2, 1) - s.at(0, 2, 1);
    // pose clips settle down-left after the strike; sweeps never drift down
    if (drift_y > -0.15) {
        if (drift_x < -0.15) return 3;
        if (drift_x > 0.15) return 4;
        if (drift_y > 0.15) return 5;
    }
    std::vector<double> deltas;
    for (std::size_t t = 0; t + 1 < s.frames; ++t) deltas.push_back(skeleton_l1(s, t, t + 1));
    const std::size_t strike = max_change_frame(deltas);
    const double lh_up = s.at(strike, 7, 1) - s.at(strike, 3, 1);
    const double rh_up = s.at(strike, 8, 1) - s.at(strike, 4, 1);
    const double rh_out = s.at(strike, 8, 0) - s.at(strike, 4, 0);
    if (lh_up > 0.3 && rh_up > 0.3) return 0;
    if (lh_up > 0.3 && rh_out > 0.3) return 2;
    if (rh_out > 0.3) return 1;
    return 999;
}

}  // namespace

TEST_CASE("generator configuration is validated") {
    GenConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.num_classes = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.joints = 12;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.frames = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.width = 15;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.noise_std = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset counts and split sizes") {
    GenConfig cfg = small_config();
    cfg.clips_per_class = 40;
    cfg.frames = 4;
    const fs::path dir = temp_dir("counts");
    ClipManifest m = generate_dataset(cfg, dir);

    REQUIRE(m.clips.size() == 240);
    std::map<std::size_t, std::size_t> per_label;
    std::map<std::string, std::size_t> per_split;
    for (const ClipEntry& e : m.clips) {
        ++per_label[e.label];
        ++per_split[e.split];
        CHECK(e.frames == 4);
        // pose classes carry a marked frame, motion classes do not
        if (e.label < 3) {
            REQUIRE(e.key_frame.has_value());
            CHECK(*e.key_frame >= 1);
            CHECK(*e.key_frame < 4);
        } else {
            CHECK_FALSE(e.key_frame.has_value());
        }
    }
    for (std::size_t label = 0; label < 6; ++label) CHECK(per_label[label] == 40);
    // 15% test and val per class: 6 + 6 + 28
    CHECK(per_split["train"] == 168);
    CHECK(per_split["val"] == 36);
    CHECK(per_split["test"] == 36);
}

TEST_CASE("tiny datasets still get a test clip") {
    GenConfig cfg = small_config();
    cfg.clips_per_class = 2;
    cfg.frames = 4;
    ClipManifest m = generate_dataset(cfg, temp_dir("tiny"));
    std::map<std::string, std::size_t> per_split;
    for (const ClipEntry& e : m.clips) ++per_split[e.split];
    CHECK(per_split["train"] == 6);
    CHECK(per_split["val"] == 0);
    CHECK(per_split["test"] == 6);
}

TEST_CASE("generation is reproducible byte for byte") {
    GenConfig cfg = small_config();
    const fs::path a = temp_dir("detA");
    const fs::path b = temp_dir("detB");
    ClipManifest ma = generate_dataset(cfg, a);
    ClipManifest mb = generate_dataset(cfg, b);

    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    REQUIRE(ma.clips.size() == mb.clips.size());
    for (std::size_t i = 0; i < ma.clips.size(); ++i) {
        CHECK(slurp(a / ma.clips[i].video) == slurp(b / mb.clips[i].video));
        CHECK(slurp(a / ma.clips[i].skeleton) == slurp(b / mb.clips[i].skeleton));
    }

    // and a different seed actually changes the data
    Rng r1 = Rng::child(1, 0);
    Rng r2 = Rng::child(2, 0);
    GeneratedClip g1 = generate_clip(cfg, 0, "x", r1);
    GeneratedClip g2 = generate_clip(cfg, 0, "x", r2);
    CHECK(g1.video.pixels != g2.video.pixels);
}

TEST_CASE("the marked frame is the largest adjacent change in pose clips") {
    GenConfig cfg;  // full default geometry
    cfg.clips_per_class = 4;
    for (std::size_t label = 0; label < 3; ++label) {
        for (std::size_t i = 0; i < cfg.clips_per_class; ++i) {
            Rng rng = Rng::child(cfg.seed, label * cfg.clips_per_class + i);
            GeneratedClip g = generate_clip(cfg, label, "probe", rng);
            REQUIRE(g.key_frame.has_value());

            std::vector<double> video_deltas, skel_deltas;
            for (std::size_t t = 0; t + 1 < cfg.frames; ++t) {
                video_deltas.push_back(frame_l1(g.video, t, t + 1));
                skel_deltas.push_back(skeleton_l1(g.skeleton, t, t + 1));
            }
            INFO("label " << label << " clip " << i << " key frame " << *g.key_frame);
            CHECK(max_change_frame(video_deltas) == *g.key_frame);
            CHECK(max_change_frame(skel_deltas) == *g.key_frame);
        }
    }
}

TEST_CASE("pixels stay inside the unit interval") {
    GenConfig cfg = small_config();
    cfg.noise_std = 0.4;  // aggressive noise still clamps cleanly
    Rng rng = Rng::child(cfg.seed, 3);
    GeneratedClip g = generate_clip(cfg, 4, "noisy", rng);
    for (float v : g.video.pixels) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
    }
}

TEST_CASE("noiseless skeletons land exactly on rendered pixels") {
    GenConfig cfg;
    cfg.clips_per_class = 1;
    cfg.noise_std = 0.0;
    const FrameProjection proj(cfg.height, cfg.width);
    for (std::size_t label = 0; label < 6; ++label) {
        Rng rng = Rng::child(7, label);
        GeneratedClip g = generate_clip(cfg, label, "exact", rng);
        for (std::size_t t = 0; t < cfg.frames; ++t)
            for (std::size_t j = 0; j < figure::kJoints; ++j) {
                const long r = proj.row(g.skeleton.at(t, j, 1));
                const long c = proj.col(g.skeleton.at(t, j, 0));
                REQUIRE(r >= 0);
                REQUIRE(c >= 0);
                REQUIRE(r < static_cast<long>(cfg.height));
                REQUIRE(c < static_cast<long>(cfg.width));
                INFO("label " << label << " frame " << t << " joint " << j);
                CHECK(g.video.at(t, 0, static_cast<std::size_t>(r),
                                 static_cast<std::size_t>(c)) == 1.0f);
            }
    }
}

TEST_CASE("every class is identified by its construction rule") {
    GenConfig cfg;
    cfg.clips_per_class = 5;
    cfg.noise_std = 0.0;
    for (std::size_t label = 0; label < 6; ++label) {
        for (std::size_t i = 0; i < cfg.clips_per_class; ++i) {
            Rng rng = Rng::child(31, label * cfg.clips_per_class + i);
            GeneratedClip g = generate_clip(cfg, label, "rule", rng);
            INFO("label " << label << " clip " << i);
            CHECK(classify_by_construction(g) == label);
        }
    }
}

TEST_CASE("skeleton CSV files round-trip exactly") {
    GenConfig cfg = small_config();
    Rng rng = Rng::child(cfg.seed, 11);
    GeneratedClip g = generate_clip(cfg, 1, "rt", rng);
    const fs::path dir = temp_dir("skel_rt");

    save_skeleton(dir / "rt.csv", g.skeleton);
    SkeletonSequence back = load_skeleton(dir / "rt.csv");
    CHECK(back.frames == g.skeleton.frames);
    CHECK(back.joints == g.skeleton.joints);
    CHECK(back.coords == g.skeleton.coords);
}

TEST_CASE("skeleton rows may arrive in any order") {
    GenConfig cfg = small_config();
    Rng rng = Rng::child(cfg.seed, 12);
    GeneratedClip g = generate_clip(cfg, 2, "shuffle", rng);
    const fs::path dir = temp_dir("skel_shuffle");
    save_skeleton(dir / "a.csv", g.skeleton);

    std::ifstream in(dir / "a.csv");
    std::string header, line;
    std::getline(in, header);
    std::vector<std::string> rows;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(line);
    in.close();
    std::reverse(rows.begin(), rows.end());
    std::swap(rows.front(), rows[rows.size() / 2]);
    std::ofstream out(dir / "b.csv", std::ios::trunc);
    out << header << '\n';
    for (const std::string& r : rows) out << r << '\n';
    out.close();

    SkeletonSequence back = load_skeleton(dir / "b.csv");
    CHECK(back.coords == g.skeleton.coords);
}

TEST_CASE("skeleton loader rejects damaged files") {
    GenConfig cfg = small_config();
    Rng rng = Rng::child(cfg.seed, 13);
    GeneratedClip g = generate_clip(cfg, 0, "bad", rng);
    const fs::path dir = temp_dir("skel_bad");
    save_skeleton(dir / "good.csv", g.skeleton);

    std::ifstream in(dir / "good.csv");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    in.close();

    SECTION("missing row") {
        std::ofstream out(dir / "missing.csv", std::ios::trunc);
        for (std::size_t i = 0; i < lines.size(); ++i)
            if (i != 5) out << lines[i] << '\n';
        out.close();
        CHECK_THROWS_AS(load_skeleton(dir / "missing.csv"), FormatError);
    }
    SECTION("mangled row") {
        lines[3] = "1,not,a,number,row";
        std::ofstream out(dir / "mangled.csv", std::ios::trunc);
        for (const std::string& l : lines) out << l << '\n';
        out.close();
        CHECK_THROWS_AS(load_skeleton(dir / "mangled.csv"), FormatError);
    }
    SECTION("header absent") {
        std::ofstream out(dir / "headless.csv", std::ios::trunc);
        for (std::size_t i = 1; i < lines.size(); ++i) out << lines[i] << '\n';
        out.close();
        CHECK_THROWS_AS(load_skeleton(dir / "headless.csv"), FormatError);
    }
    SECTION("empty file") {
        std::ofstream(dir / "empty.csv", std::ios::trunc).close();
        CHECK_THROWS_AS(load_skeleton(dir / "empty.csv"), FormatError);
    }
}

TEST_CASE("clip container files round-trip exactly") {
    GenConfig cfg = small_config();
    Rng rng = Rng::child(cfg.seed, 14);
    GeneratedClip g = generate_clip(cfg, 5, "clip_rt", rng);
    const fs::path dir = temp_dir("clip_rt");

    save_clip_file(dir / "c.clip", g.video);
    VideoClip back = load_clip_file(dir / "c.clip");
    CHECK(back.clip_id == "clip_rt");
    CHECK(back.label == 5);
    CHECK(back.frames == g.video.frames);
    CHECK(back.height == g.video.height);
    CHECK(back.width == g.video.width);
    CHECK(back.pixels == g.video.pixels);

    SECTION("truncated payload") {
        auto bytes = slurp(dir / "c.clip");
        bytes.resize(bytes.size() - 4);
        std::ofstream out(dir / "cut.clip", std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_AS(load_clip_file(dir / "cut.clip"), FormatError);
    }
    SECTION("out-of-range intensity") {
        VideoClip hot = g.video;
        hot.pixels[10] = 1.5f;
        save_clip_file(dir / "hot.clip", hot);
        CHECK_THROWS_AS(load_clip_file(dir / "hot.clip"), ValueError);
    }
}

TEST_CASE("manifest round-trips entries and null key frames") {
    GenConfig cfg = small_config();
    const fs::path dir = temp_dir("manifest_rt");
    ClipManifest m = generate_dataset(cfg, dir);
    ClipManifest back = load_manifest(dir / "manifest.json");

    CHECK(back.config.clips_per_class == cfg.clips_per_class);
    CHECK(back.config.seed == cfg.seed);
    CHECK(back.config.noise_std == cfg.noise_std);
    REQUIRE(back.clips.size() == m.clips.size());
    for (std::size_t i = 0; i < m.clips.size(); ++i) {
        CHECK(back.clips[i].clip_id == m.clips[i].clip_id);
        CHECK(back.clips[i].video == m.clips[i].video);
        CHECK(back.clips[i].label == m.clips[i].label);
        CHECK(back.clips[i].split == m.clips[i].split);
        CHECK(back.clips[i].key_frame == m.clips[i].key_frame);
    }

    // full pipeline: every entry loads and the modalities agree
    for (const ClipEntry& e : back.clips) {
        auto [video, skel] = load_clip(dir, e);
        CHECK(video.frames == e.frames);
        CHECK(skel.frames == e.frames);
        CHECK(skel.label == e.label);
    }
}

TEST_CASE("load_clip rejects frame-count disagreements") {
    GenConfig cfg = small_config();
    const fs::path dir = temp_dir("frames_clash");
    ClipManifest m = generate_dataset(cfg, dir);
    ClipEntry e = m.clips[0];
    e.frames = cfg.frames + 1;
    CHECK_THROWS_AS(load_clip(dir, e), FormatError);
}

TEST_CASE("clip tensors are channel-major") {
    VideoClip clip;
    clip.frames = 2;
    clip.channels = 1;
    clip.height = 2;
    clip.width = 2;
    clip.pixels = {0.0f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f};
    Tensor t = clip_to_tensor(clip);
    REQUIRE(t.shape() == std::vector<std::size_t>{1, 2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(t.data()[i] == Catch::Approx(0.1 * static_cast<double>(i)).margin(1e-7));
    }
}

TEST_CASE("bilinear resize reproduces hand-computed values") {
    VideoClip clip;
    clip.frames = 1;
    clip.channels = 1;
    clip.height = 2;
    clip.width = 2;
    clip.pixels = {0.0f, 1.0f, 0.0f, 1.0f};

    VideoClip up = resize_frames(clip, 4, 4);
    REQUIRE(up.pixels.size() == 16);
    for (std::size_t y = 0; y < 4; ++y) {
        CHECK(up.at(0, 0, y, 0) == Catch::Approx(0.0).margin(1e-7));
        CHECK(up.at(0, 0, y, 1) == Catch::Approx(0.25).margin(1e-7));
        CHECK(up.at(0, 0, y, 2) == Catch::Approx(0.75).margin(1e-7));
        CHECK(up.at(0, 0, y, 3) == Catch::Approx(1.0).margin(1e-7));
    }

    SECTION("identity resize is a copy") {
        VideoClip same = resize_frames(clip, 2, 2);
        CHECK(same.pixels == clip.pixels);
    }
    SECTION("downscale keeps the range") {
        GenConfig cfg = small_config();
        Rng rng = Rng::child(cfg.seed, 20);
        GeneratedClip g = generate_clip(cfg, 3, "down", rng);
        VideoClip down = resize_frames(g.video, 9, 7);
        for (float v : down.pixels) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
    }
    SECTION("zero extent is rejected") {
        CHECK_THROWS_AS(resize_frames(clip, 0, 4), ValueError);
    }
}
