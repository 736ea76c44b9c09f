#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "bccn/bccn_model.hpp"
#include "bccn/ops.hpp"
#include "bccn/tensor.hpp"

namespace bccn {

enum class PathwaySelector { Keyframe, Temporal };

inline const char* pathway_name(PathwaySelector p) {
    return p == PathwaySelector::Keyframe ? "keyframe" : "temporal";
}

/// Class-activation map at one pathway stage. Values are normalized to [0,1];
/// the max is exactly 1 unless the raw map was identically zero.
struct Heatmap {
    std::string clip_id;
    std::size_t target_class = 0;
    std::string pathway;
    std::size_t stage = 0;
    std::size_t frames = 0, height = 0, width = 0;
    std::vector<double> values;  // T' x H' x W'

    double at(std::size_t t, std::size_t y, std::size_t x) const {
        return values[(t * height + y) * width + x];
    }
};

constexpr std::size_t kLastStage = std::numeric_limits<std::size_t>::max();

/// Gradient-weighted class activation: backward from the target logit,
/// channel weights = mean gradient over (t,h,w), map = relu(sum_c w_c A_c),
/// normalized by the global max (a zero map stays zero).
inline Heatmap gradcam(const Tensor& clip, const std::vector<std::size_t>& selected,
                       const BccnModel& model, std::size_t target_class,
                       PathwaySelector pathway, std::size_t stage = kLastStage,
                       const std::string& clip_id = "") {
    if (target_class >= model.config.num_classes) {
        throw ConfigError("activation map: class " + std::to_string(target_class) +
                          " out of range for " + std::to_string(model.config.num_classes) +
                          " classes");
    }
    const std::size_t n = model.config.num_stages();
    const std::size_t s = stage == kLastStage ? n - 1 : stage;
    if (s >= n) {
        throw ConfigError("activation map: stage " + std::to_string(stage) +
                          " out of range for " + std::to_string(n) + " stages");
    }

    BccnTrace trace = bccn_forward_traced(clip, selected, model);
    const Tensor acts = pathway == PathwaySelector::Keyframe ? trace.keyframe_stages[s]
                                                             : trace.temporal_stages[s];
    backward(pick(trace.logits, target_class));

    const std::size_t c = acts.extent(0), t = acts.extent(1), h = acts.extent(2),
                      w = acts.extent(3);
    const std::size_t cells = t * h * w;
    const std::vector<double>& g = acts.grad();

    std::vector<double> weights(c, 0.0);
    for (std::size_t ci = 0; ci < c; ++ci) {
        double sum = 0.0;
        for (std::size_t i = 0; i < cells; ++i) sum += g[ci * cells + i];
        weights[ci] = sum / static_cast<double>(cells);
    }

    Heatmap hm;
    hm.clip_id = clip_id;
    hm.target_class = target_class;
    hm.pathway = pathway_name(pathway);
    hm.stage = s;
    hm.frames = t;
    hm.height = h;
    hm.width = w;
    hm.values.assign(cells, 0.0);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double wc = weights[ci];
        if (wc == 0.0) continue;
        for (std::size_t i = 0; i < cells; ++i) hm.values[i] += wc * acts.data()[ci * cells + i];
    }
    double mx = 0.0;
    for (double& v : hm.values) {
        if (v < 0.0) v = 0.0;
        mx = std::max(mx, v);
    }
    if (mx > 0.0) {
        for (double& v : hm.values) v /= mx;
    }
    return hm;
}

/// Mass fraction inside one image quadrant (0 TL, 1 TR, 2 BL, 3 BR), with
/// fractional cell overlap so a uniform map scores exactly 0.25.
inline double quadrant_mass_fraction(const Heatmap& hm, int quadrant) {
    if (quadrant < 0 || quadrant > 3) throw ValueError("quadrant must be in [0,3]");
    const double half_h = static_cast<double>(hm.height) / 2.0;
    const double half_w = static_cast<double>(hm.width) / 2.0;
    const bool top = quadrant < 2;
    const bool left = quadrant % 2 == 0;
    double total = 0.0, inside = 0.0;
    for (std::size_t t = 0; t < hm.frames; ++t)
        for (std::size_t y = 0; y < hm.height; ++y) {
            const double y0 = static_cast<double>(y), y1 = y0 + 1.0;
            const double oy = top ? std::clamp(half_h - y0, 0.0, 1.0)
                                  : std::clamp(y1 - half_h, 0.0, 1.0);
            for (std::size_t x = 0; x < hm.width; ++x) {
                const double x0 = static_cast<double>(x), x1 = x0 + 1.0;
                const double ox = left ? std::clamp(half_w - x0, 0.0, 1.0)
                                       : std::clamp(x1 - half_w, 0.0, 1.0);
                const double v = hm.at(t, y, x);
                total += v;
                inside += v * oy * ox;
            }
        }
    return total > 0.0 ? inside / total : 0.0;
}

/// Writes base_t<k>.pgm (P5, maxval 255) per time slice plus base.json with
/// the metadata and the slice file list. Values quantize as round(255*v).
inline void write_heatmap(const Heatmap& hm, const std::filesystem::path& base) {
    auto slice_name = [&](std::size_t t) {
        return base.filename().string() + "_t" + std::to_string(t) + ".pgm";
    };
    for (std::size_t t = 0; t < hm.frames; ++t) {
        const std::filesystem::path p = base.parent_path() / slice_name(t);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + p.string() + " for writing");
        out << "P5\n" << hm.width << ' ' << hm.height << "\n255\n";
        for (std::size_t y = 0; y < hm.height; ++y)
            for (std::size_t x = 0; x < hm.width; ++x) {
                const long q = std::lround(255.0 * hm.at(t, y, x));
                out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(q, 0L, 255L))));
            }
        if (!out) throw FormatError("short write to " + p.string());
    }
    nlohmann::ordered_json meta;
    meta["clip_id"] = hm.clip_id;
    meta["target_class"] = hm.target_class;
    meta["pathway"] = hm.pathway;
    meta["stage"] = hm.stage;
    meta["frames"] = hm.frames;
    meta["height"] = hm.height;
    meta["width"] = hm.width;
    auto slices = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < hm.frames; ++t) slices.push_back(slice_name(t));
    meta["slices"] = std::move(slices);
    const std::filesystem::path jp = base.parent_path() / (base.filename().string() + ".json");
    std::ofstream out(jp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + jp.string() + " for writing");
    out << meta.dump(2) << '\n';
}

struct PgmImage {
    std::size_t height = 0, width = 0;
    std::vector<unsigned char> bytes;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string magic;
    std::size_t w = 0, h = 0;
    int maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || maxval != 255 || w == 0 || h == 0) {
        throw FormatError(path.string() + " is not a maxval-255 P5 PGM");
    }
    in.get();  // single whitespace after the header
    PgmImage img;
    img.height = h;
    img.width = w;
    img.bytes.resize(w * h);
    in.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(w * h));
    if (static_cast<std::size_t>(in.gcount()) != w * h) {
        throw FormatError(path.string() + " truncated");
    }
    return img;
}

}  // namespace bccn
