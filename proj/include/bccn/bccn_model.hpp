#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "bccn/ops.hpp"
#include "bccn/serialize.hpp"
#include "bccn/tensor.hpp"

namespace bccn {

/// Geometry of the two pathways. The keyframe pathway is narrow in time
/// (K frames) and wide in channels; the temporal pathway consumes all T
/// frames through narrow channels. Stage i halves H and W for i >= 1; time
/// extents never change, so T mod K holds at every lateral site.
struct PathwayConfig {
    std::size_t input_channels = 1;
    std::size_t frames = 16;     // T
    std::size_t keyframes = 4;   // K
    std::size_t height = 36;
    std::size_t width = 24;
    std::vector<std::size_t> keyframe_channels = {16, 32, 128};
    std::vector<std::size_t> temporal_channels = {2, 4, 8};
    std::size_t num_classes = 6;

    std::size_t num_stages() const { return keyframe_channels.size(); }

    void validate() const {
        if (input_channels == 0 || height == 0 || width == 0) {
            throw ConfigError("pathway config needs positive input extents");
        }
        if (keyframes < 1 || frames < keyframes || frames % keyframes != 0) {
            throw ConfigError("pathway config needs T divisible by K with T >= K >= 1, got T=" +
                              std::to_string(frames) + ", K=" + std::to_string(keyframes));
        }
        if (keyframe_channels.size() < 2 ||
            keyframe_channels.size() != temporal_channels.size()) {
            throw ConfigError("pathway config needs matching channel schedules of length >= 2");
        }
        for (std::size_t i = 0; i < keyframe_channels.size(); ++i) {
            if (keyframe_channels[i] == 0 || temporal_channels[i] == 0 ||
                keyframe_channels[i] < temporal_channels[i]) {
                throw ConfigError("stage " + std::to_string(i) +
                                  " violates keyframe_channels >= temporal_channels >= 1");
            }
        }
        if (num_classes < 2) throw ConfigError("pathway config needs at least 2 classes");
    }
};

struct Conv3dLayer {
    Tensor kernel;
    Tensor bias;
    Triple stride{1, 1, 1};
    Triple padding{0, 0, 0};

    static Conv3dLayer init(std::size_t cin, std::size_t cout, Triple ksize, Triple stride,
                            Triple padding, Rng& rng) {
        Conv3dLayer l;
        l.kernel = kaiming_uniform({cout, cin, ksize[0], ksize[1], ksize[2]},
                                   cin * ksize[0] * ksize[1] * ksize[2], rng);
        l.bias = Tensor::zeros({cout}, true);
        l.stride = stride;
        l.padding = padding;
        return l;
    }

    Tensor forward(const Tensor& x) const { return conv3d(x, kernel, bias, stride, padding); }
};

/// 1x1x1 channel alignment from the keyframe width to the temporal width.
struct KttParams {
    Tensor kernel;  // C_t x C_k x 1 x 1 x 1
    Tensor bias;

    static KttParams init(std::size_t c_keyframe, std::size_t c_temporal, Rng& rng) {
        KttParams p;
        p.kernel = kaiming_uniform({c_temporal, c_keyframe, 1, 1, 1}, c_keyframe, rng);
        p.bias = Tensor::zeros({c_temporal}, true);
        return p;
    }
};

/// Pyramid of 3D convs with spatial kernels {1,3,5} (same padding), each
/// compressing time by kernel = stride = T/K, concatenated and fused 1x1x1.
struct TtkParams {
    static constexpr std::array<std::size_t, 3> kSpatialKernels = {1, 3, 5};
    std::size_t temporal_kernel = 1;  // == temporal stride == T/K
    std::vector<Conv3dLayer> branches;
    Tensor fusion_kernel;  // C_k x 3*C_k x 1 x 1 x 1
    Tensor fusion_bias;

    static TtkParams init(std::size_t c_temporal, std::size_t c_keyframe,
                          std::size_t temporal_kernel, Rng& rng) {
        TtkParams p;
        p.temporal_kernel = temporal_kernel;
        for (std::size_t k : kSpatialKernels) {
            p.branches.push_back(Conv3dLayer::init(
                c_temporal, c_keyframe, {temporal_kernel, k, k}, {temporal_kernel, 1, 1},
                {0, (k - 1) / 2, (k - 1) / 2}, rng));
        }
        const std::size_t concat = kSpatialKernels.size() * c_keyframe;
        p.fusion_kernel = kaiming_uniform({c_keyframe, concat, 1, 1, 1}, concat, rng);
        p.fusion_bias = Tensor::zeros({c_keyframe}, true);
        return p;
    }
};

/// Maps each temporal step t in [0, t_target) to the keyframe whose segment
/// contains it. Segments split at the midpoints between consecutive selected
/// source indices, rescaled from the clip time base to the target time base.
inline std::vector<std::size_t> segment_assignment(const std::vector<std::size_t>& selected,
                                                   std::size_t t_source, std::size_t t_target) {
    if (selected.empty()) throw ShapeError("segment_assignment: empty selection");
    if (t_source == 0 || t_target == 0) {
        throw ShapeError("segment_assignment: zero-length time base");
    }
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (selected[i] >= t_source) {
            throw ShapeError("segment_assignment: index " + std::to_string(selected[i]) +
                             " out of range for T=" + std::to_string(t_source));
        }
        if (i > 0 && selected[i] <= selected[i - 1]) {
            throw ShapeError("segment_assignment: selection must be strictly increasing");
        }
    }
    std::vector<std::size_t> assign(t_target, 0);
    std::size_t start = 0;
    for (std::size_t i = 0; i + 1 < selected.size(); ++i) {
        // boundary = ceil(midpoint * t_target / t_source), midpoint between
        // selected[i] and selected[i+1]
        const std::size_t num = (selected[i] + selected[i + 1]) * t_target;
        std::size_t boundary = (num + 2 * t_source - 1) / (2 * t_source);
        if (boundary > t_target) boundary = t_target;
        if (boundary < start) boundary = start;
        for (std::size_t t = start; t < boundary; ++t) assign[t] = i;
        start = boundary;
    }
    for (std::size_t t = start; t < t_target; ++t) assign[t] = selected.size() - 1;
    return assign;
}

/// Keyframe-to-temporal lateral: align channels, then broadcast each
/// projected keyframe over its time segment. Returns the additive residual.
inline Tensor ktt_forward(const Tensor& keyframe_feats, const std::vector<std::size_t>& selected,
                          const KttParams& params, std::size_t t_source, std::size_t t_target) {
    if (keyframe_feats.rank() != 4) {
        throw ShapeError("ktt_forward: rank-4 keyframe features required, got " +
                         detail::shape_str(keyframe_feats.shape()));
    }
    if (selected.size() != keyframe_feats.extent(1)) {
        throw ShapeError("ktt_forward: " + std::to_string(selected.size()) +
                         " selected indices vs K=" + std::to_string(keyframe_feats.extent(1)));
    }
    const Tensor aligned = conv3d(keyframe_feats, params.kernel, params.bias);
    return inflate_time(aligned, segment_assignment(selected, t_source, t_target));
}

/// Temporal-to-keyframe lateral: pyramid convs compress time by T/K, outputs
/// concatenate on channels and fuse 1x1x1. Returns the additive residual.
inline Tensor ttk_forward(const Tensor& temporal_feats, const TtkParams& params, std::size_t k) {
    if (temporal_feats.rank() != 4) {
        throw ShapeError("ttk_forward: rank-4 temporal features required, got " +
                         detail::shape_str(temporal_feats.shape()));
    }
    const std::size_t t = temporal_feats.extent(1);
    if (k == 0 || t % k != 0) {
        throw ShapeError("ttk_forward: T=" + std::to_string(t) + " not divisible by K=" +
                         std::to_string(k));
    }
    if (t / k != params.temporal_kernel) {
        throw ShapeError("ttk_forward: unit built for temporal kernel " +
                         std::to_string(params.temporal_kernel) + ", got T/K=" +
                         std::to_string(t / k));
    }
    std::vector<Tensor> outs;
    outs.reserve(params.branches.size());
    for (const Conv3dLayer& branch : params.branches) outs.push_back(branch.forward(temporal_feats));
    return conv3d(concat_channels(outs), params.fusion_kernel, params.fusion_bias);
}

/// Frames of a clip tensor picked in ascending selection order.
inline Tensor gather_keyframe_input(const Tensor& clip, const std::vector<std::size_t>& selected) {
    if (selected.empty()) throw ShapeError("gather_keyframe_input: empty selection");
    for (std::size_t i = 1; i < selected.size(); ++i) {
        if (selected[i] <= selected[i - 1]) {
            throw ShapeError("gather_keyframe_input: selection must be strictly increasing");
        }
    }
    return gather_time(clip, selected);
}

enum class LateralKind { None, TimeStrided, KttTtk };
enum class FrameSource { Strided, Selected };

/// Two-pathway recognition model. LateralKind::KttTtk with both units on is
/// the full model; the flags ablate either unit, and TimeStrided swaps the
/// units for a plain time-strided lateral conv into the keyframe pathway.
struct BccnModel {
    PathwayConfig config;
    LateralKind lateral_kind = LateralKind::KttTtk;
    FrameSource frame_source = FrameSource::Selected;
    bool use_ktt = true;
    bool use_ttk = true;

    Conv3dLayer kf_stem, t_stem;
    std::vector<Conv3dLayer> kf_stages, t_stages;
    std::vector<KttParams> ktt_units;
    std::vector<TtkParams> ttk_units;
    std::vector<Conv3dLayer> strided_laterals;
    Tensor head_w, head_b;

    static BccnModel init(const PathwayConfig& config, LateralKind lateral_kind,
                          FrameSource frame_source, bool use_ktt, bool use_ttk, Rng& rng) {
        config.validate();
        BccnModel m;
        m.config = config;
        m.lateral_kind = lateral_kind;
        m.frame_source = frame_source;
        m.use_ktt = use_ktt;
        m.use_ttk = use_ttk;
        const auto& ck = config.keyframe_channels;
        const auto& ct = config.temporal_channels;
        const std::size_t n = config.num_stages();
        const std::size_t tk = config.frames / config.keyframes;

        m.kf_stem = Conv3dLayer::init(config.input_channels, ck[0], {1, 3, 3}, {1, 2, 2},
                                      {0, 1, 1}, rng);
        m.t_stem = Conv3dLayer::init(config.input_channels, ct[0], {3, 3, 3}, {1, 2, 2},
                                     {1, 1, 1}, rng);
        for (std::size_t i = 0; i < n; ++i) {
            const Triple stride = i == 0 ? Triple{1, 1, 1} : Triple{1, 2, 2};
            const std::size_t ck_in = i == 0 ? ck[0] : ck[i - 1];
            const std::size_t ct_in = i == 0 ? ct[0] : ct[i - 1];
            m.kf_stages.push_back(
                Conv3dLayer::init(ck_in, ck[i], {3, 3, 3}, stride, {1, 1, 1}, rng));
            m.t_stages.push_back(
                Conv3dLayer::init(ct_in, ct[i], {3, 3, 3}, stride, {1, 1, 1}, rng));
        }
        for (std::size_t i = 0; i + 1 < n; ++i) {
            switch (lateral_kind) {
                case LateralKind::None:
                    break;
                case LateralKind::TimeStrided:
                    m.strided_laterals.push_back(Conv3dLayer::init(
                        ct[i], ck[i], {tk, 1, 1}, {tk, 1, 1}, {0, 0, 0}, rng));
                    break;
                case LateralKind::KttTtk:
                    m.ktt_units.push_back(KttParams::init(ck[i], ct[i], rng));
                    m.ttk_units.push_back(TtkParams::init(ct[i], ck[i], tk, rng));
                    break;
            }
        }
        const std::size_t pooled = ck[n - 1] + ct[n - 1];
        m.head_w = Tensor::zeros({config.num_classes, pooled}, true);
        m.head_b = Tensor::zeros({config.num_classes}, true);
        return m;
    }

    /// Frame indices feeding the keyframe pathway when no selector output is
    /// supplied: every (T/K)-th frame starting at 0.
    std::vector<std::size_t> strided_indices() const {
        std::vector<std::size_t> idx(config.keyframes);
        const std::size_t step = config.frames / config.keyframes;
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i * step;
        return idx;
    }

    std::vector<NamedParam> named_parameters() {
        std::vector<NamedParam> out;
        auto layer = [&out](const std::string& prefix, Conv3dLayer& l) {
            out.push_back({prefix + ".kernel", l.kernel});
            out.push_back({prefix + ".bias", l.bias});
        };
        layer("kf_stem", kf_stem);
        layer("t_stem", t_stem);
        for (std::size_t i = 0; i < kf_stages.size(); ++i)
            layer("kf_stage" + std::to_string(i), kf_stages[i]);
        for (std::size_t i = 0; i < t_stages.size(); ++i)
            layer("t_stage" + std::to_string(i), t_stages[i]);
        for (std::size_t i = 0; i < ktt_units.size(); ++i) {
            out.push_back({"ktt" + std::to_string(i) + ".kernel", ktt_units[i].kernel});
            out.push_back({"ktt" + std::to_string(i) + ".bias", ktt_units[i].bias});
        }
        for (std::size_t i = 0; i < ttk_units.size(); ++i) {
            for (std::size_t b = 0; b < ttk_units[i].branches.size(); ++b) {
                layer("ttk" + std::to_string(i) + ".branch" + std::to_string(b),
                      ttk_units[i].branches[b]);
            }
            out.push_back({"ttk" + std::to_string(i) + ".fusion.kernel", ttk_units[i].fusion_kernel});
            out.push_back({"ttk" + std::to_string(i) + ".fusion.bias", ttk_units[i].fusion_bias});
        }
        for (std::size_t i = 0; i < strided_laterals.size(); ++i)
            layer("lateral" + std::to_string(i), strided_laterals[i]);
        out.push_back({"head.w", head_w});
        out.push_back({"head.b", head_b});
        return out;
    }

    std::vector<Tensor> parameters() {
        std::vector<Tensor> out;
        for (NamedParam& p : named_parameters()) out.push_back(p.tensor);
        return out;
    }
};

/// Per-stage activations captured during a forward pass, for activation-map
/// extraction. Entry i is the pathway output of stage i after lateral fusion.
struct BccnTrace {
    std::vector<Tensor> keyframe_stages;
    std::vector<Tensor> temporal_stages;
    Tensor logits;
};

inline BccnTrace bccn_forward_traced(const Tensor& clip, const std::vector<std::size_t>& selected,
                                     const BccnModel& model) {
    const PathwayConfig& cfg = model.config;
    if (clip.rank() != 4 || clip.extent(0) != cfg.input_channels ||
        clip.extent(1) != cfg.frames || clip.extent(2) != cfg.height ||
        clip.extent(3) != cfg.width) {
        throw ShapeError("bccn_forward: clip " + detail::shape_str(clip.shape()) +
                         " does not match configured input (" +
                         std::to_string(cfg.input_channels) + "," + std::to_string(cfg.frames) +
                         "," + std::to_string(cfg.height) + "," + std::to_string(cfg.width) + ")");
    }
    const std::vector<std::size_t> indices =
        model.frame_source == FrameSource::Selected ? selected : model.strided_indices();
    if (indices.size() != cfg.keyframes) {
        throw ShapeError("bccn_forward: " + std::to_string(indices.size()) +
                         " frame indices vs configured K=" + std::to_string(cfg.keyframes));
    }

    BccnTrace trace;
    Tensor x_k = relu(model.kf_stem.forward(gather_keyframe_input(clip, indices)));
    Tensor x_t = relu(model.t_stem.forward(clip));
    const std::size_t n = cfg.num_stages();
    for (std::size_t i = 0; i < n; ++i) {
        x_k = relu(model.kf_stages[i].forward(x_k));
        x_t = relu(model.t_stages[i].forward(x_t));
        if (i + 1 < n) {
            switch (model.lateral_kind) {
                case LateralKind::None:
                    break;
                case LateralKind::TimeStrided:
                    x_k = add(x_k, model.strided_laterals[i].forward(x_t));
                    break;
                case LateralKind::KttTtk: {
                    // both residuals read the pre-exchange activations; disabling
                    // one unit must not perturb the pathway it reads from
                    const Tensor t_in = x_t;
                    if (model.use_ktt) {
                        x_t = add(x_t, ktt_forward(x_k, indices, model.ktt_units[i], cfg.frames,
                                                   x_t.extent(1)));
                    }
                    if (model.use_ttk) {
                        x_k = add(x_k, ttk_forward(t_in, model.ttk_units[i], cfg.keyframes));
                    }
                    break;
                }
            }
        }
        trace.keyframe_stages.push_back(x_k);
        trace.temporal_stages.push_back(x_t);
    }
    const Tensor pooled = concat_vec({global_avg_pool(x_k), global_avg_pool(x_t)});
    trace.logits = add(matvec(model.head_w, pooled), model.head_b);
    return trace;
}

inline Tensor bccn_forward(const Tensor& clip, const std::vector<std::size_t>& selected,
                           const BccnModel& model) {
    return bccn_forward_traced(clip, selected, model).logits;
}

inline std::size_t parameter_count(const std::vector<Tensor>& params) {
    std::size_t n = 0;
    for (const Tensor& p : params) n += p.numel();
    return n;
}

inline std::size_t parameter_count(BccnModel& model) { return parameter_count(model.parameters()); }

}  // namespace bccn
