#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bccn/bccn_model.hpp"
#include "bccn/keyframe_selector.hpp"
#include "bccn/ops.hpp"

namespace bccn {

/// One loaded example in model-ready form.
struct ClipSample {
    std::string clip_id;
    Tensor video;      // C x T x H x W
    Tensor skel_rows;  // T x (J*3), normalized
    std::size_t label = 0;
    std::string split;
    std::optional<std::size_t> key_frame;     // ground-truth pose frame, if any
    std::vector<std::size_t> selected;        // selector output, ascending
    std::optional<std::size_t> top_frame;     // selector's single most probable frame
};

/// A trainable classifier over clip samples. forward() builds a fresh tape
/// and returns logits; parameters are shared handles into that tape.
class Model {
public:
    virtual ~Model() = default;
    virtual const std::string& name() const = 0;
    virtual Tensor forward(const ClipSample& sample) const = 0;
    virtual std::vector<Tensor> parameters() = 0;
    virtual std::vector<NamedParam> named_parameters() = 0;
};

namespace detail {

inline const std::vector<std::size_t>& require_selection(const ClipSample& s) {
    if (s.selected.empty()) {
        throw ConfigError("variant needs keyframe selection, but clip '" + s.clip_id +
                          "' has none; run the selector first");
    }
    return s.selected;
}

}  // namespace detail

/// slowfast_lite, slowfast_plus_keyframe, and the four bccn rows.
class TwoPathwayVariant final : public Model {
public:
    TwoPathwayVariant(std::string name, BccnModel model)
        : name_(std::move(name)), model_(std::move(model)) {}

    const std::string& name() const override { return name_; }

    Tensor forward(const ClipSample& s) const override {
        const bool needs_selection = model_.frame_source == FrameSource::Selected;
        return bccn_forward(s.video, needs_selection ? detail::require_selection(s)
                                                     : std::vector<std::size_t>{},
                            model_);
    }

    std::vector<Tensor> parameters() override { return model_.parameters(); }
    std::vector<NamedParam> named_parameters() override { return model_.named_parameters(); }

    BccnModel& model() { return model_; }
    const BccnModel& model() const { return model_; }

private:
    std::string name_;
    BccnModel model_;
};

/// c2d_lite (per-frame convs + temporal pooling), i3d_lite, and the
/// keyframe-pathway-only row share this single-pathway stack.
class SinglePathwayVariant final : public Model {
public:
    enum class Frames { All, Selected };

    SinglePathwayVariant(std::string name, const PathwayConfig& cfg,
                         std::vector<std::size_t> channels, std::size_t temporal_kernel,
                         Frames frames, Rng& rng)
        : name_(std::move(name)), frames_(frames) {
        const std::size_t tk = temporal_kernel;
        const Triple kstem{tk, 3, 3}, pad{(tk - 1) / 2, 1, 1};
        stem_ = Conv3dLayer::init(cfg.input_channels, channels[0], kstem, {1, 2, 2}, pad, rng);
        for (std::size_t i = 0; i < channels.size(); ++i) {
            const Triple stride = i == 0 ? Triple{1, 1, 1} : Triple{1, 2, 2};
            const std::size_t cin = i == 0 ? channels[0] : channels[i - 1];
            stages_.push_back(Conv3dLayer::init(cin, channels[i], kstem, stride, pad, rng));
        }
        head_w_ = Tensor::zeros({cfg.num_classes, channels.back()}, true);
        head_b_ = Tensor::zeros({cfg.num_classes}, true);
    }

    const std::string& name() const override { return name_; }

    Tensor forward(const ClipSample& s) const override {
        Tensor x = frames_ == Frames::Selected
                       ? gather_keyframe_input(s.video, detail::require_selection(s))
                       : s.video;
        x = relu(stem_.forward(x));
        for (const Conv3dLayer& st : stages_) x = relu(st.forward(x));
        return add(matvec(head_w_, global_avg_pool(x)), head_b_);
    }

    std::vector<Tensor> parameters() override {
        std::vector<Tensor> out;
        for (NamedParam& p : named_parameters()) out.push_back(p.tensor);
        return out;
    }

    std::vector<NamedParam> named_parameters() override {
        std::vector<NamedParam> out;
        out.push_back({"stem.kernel", stem_.kernel});
        out.push_back({"stem.bias", stem_.bias});
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            out.push_back({"stage" + std::to_string(i) + ".kernel", stages_[i].kernel});
            out.push_back({"stage" + std::to_string(i) + ".bias", stages_[i].bias});
        }
        out.push_back({"head.w", head_w_});
        out.push_back({"head.b", head_b_});
        return out;
    }

private:
    std::string name_;
    Frames frames_;
    Conv3dLayer stem_;
    std::vector<Conv3dLayer> stages_;
    Tensor head_w_, head_b_;
};

/// slowfast_plus_skeleton_feature: the strided two-pathway trunk plus an
/// LSTM over the skeleton, all three pooled features concatenated at a
/// shared head (the trunk's own head is unused and excluded from training).
class SkeletonFeatureVariant final : public Model {
public:
    SkeletonFeatureVariant(std::string name, const PathwayConfig& cfg,
                           std::size_t skel_input_dim, std::size_t skel_hidden, Rng& rng)
        : name_(std::move(name)),
          trunk_(BccnModel::init(cfg, LateralKind::TimeStrided, FrameSource::Strided, false,
                                 false, rng)),
          lstm_(LstmParams::init(skel_input_dim, skel_hidden, rng)) {
        const std::size_t pooled =
            cfg.keyframe_channels.back() + cfg.temporal_channels.back() + skel_hidden;
        head_w_ = Tensor::zeros({cfg.num_classes, pooled}, true);
        head_b_ = Tensor::zeros({cfg.num_classes}, true);
    }

    const std::string& name() const override { return name_; }

    Tensor forward(const ClipSample& s) const override {
        BccnTrace trace = bccn_forward_traced(s.video, {}, trunk_);
        const Tensor hidden = encode_sequence(s.skel_rows, lstm_);
        const Tensor h_last = gather_row(hidden, hidden.extent(0) - 1);
        const Tensor feats = concat_vec({global_avg_pool(trace.keyframe_stages.back()),
                                         global_avg_pool(trace.temporal_stages.back()), h_last});
        return add(matvec(head_w_, feats), head_b_);
    }

    std::vector<Tensor> parameters() override {
        std::vector<Tensor> out;
        for (NamedParam& p : named_parameters()) out.push_back(p.tensor);
        return out;
    }

    std::vector<NamedParam> named_parameters() override {
        std::vector<NamedParam> out;
        for (NamedParam& p : trunk_.named_parameters()) {
            if (p.name == "head.w" || p.name == "head.b") continue;
            out.push_back(p);
        }
        static const char* lstm_names[] = {"w_i", "w_f", "w_g", "w_o", "u_i", "u_f",
                                           "u_g", "u_o", "b_i", "b_f", "b_g", "b_o"};
        auto lp = lstm_.parameters();
        for (std::size_t i = 0; i < lp.size(); ++i)
            out.push_back({std::string("skel.lstm.") + lstm_names[i], lp[i]});
        out.push_back({"fusion_head.w", head_w_});
        out.push_back({"fusion_head.b", head_b_});
        return out;
    }

private:
    std::string name_;
    BccnModel trunk_;
    LstmParams lstm_;
    Tensor head_w_, head_b_;
};

inline const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names = {
        "c2d_lite",          "i3d_lite",          "slowfast_lite",
        "slowfast_plus_skeleton_feature",         "slowfast_plus_keyframe",
        "bccn_keyframe_only", "bccn_no_ktt",      "bccn_no_ttk",
        "bccn_full"};
    return names;
}

inline bool variant_needs_selection(const std::string& name) {
    return name == "slowfast_plus_keyframe" || name == "bccn_keyframe_only" ||
           name == "bccn_no_ktt" || name == "bccn_no_ttk" || name == "bccn_full";
}

/// Builds a registered variant. c2d/i3d use a slimmer single-pathway channel
/// schedule; all others derive from the supplied pathway config.
inline std::unique_ptr<Model> make_variant(const std::string& name, const PathwayConfig& cfg,
                                           std::size_t skel_input_dim, std::size_t skel_hidden,
                                           Rng& rng) {
    cfg.validate();
    const std::vector<std::size_t> slim = {8, 16, 32};
    if (name == "c2d_lite") {
        return std::make_unique<SinglePathwayVariant>(name, cfg, slim, 1,
                                                      SinglePathwayVariant::Frames::All, rng);
    }
    if (name == "i3d_lite") {
        return std::make_unique<SinglePathwayVariant>(name, cfg, slim, 3,
                                                      SinglePathwayVariant::Frames::All, rng);
    }
    if (name == "slowfast_lite") {
        return std::make_unique<TwoPathwayVariant>(
            name, BccnModel::init(cfg, LateralKind::TimeStrided, FrameSource::Strided, false,
                                  false, rng));
    }
    if (name == "slowfast_plus_skeleton_feature") {
        return std::make_unique<SkeletonFeatureVariant>(name, cfg, skel_input_dim, skel_hidden,
                                                        rng);
    }
    if (name == "slowfast_plus_keyframe") {
        return std::make_unique<TwoPathwayVariant>(
            name, BccnModel::init(cfg, LateralKind::TimeStrided, FrameSource::Selected, false,
                                  false, rng));
    }
    if (name == "bccn_keyframe_only") {
        return std::make_unique<TwoPathwayVariant>(
            name,
            BccnModel::init(cfg, LateralKind::None, FrameSource::Selected, false, false, rng));
    }
    if (name == "bccn_no_ktt") {
        return std::make_unique<TwoPathwayVariant>(
            name, BccnModel::init(cfg, LateralKind::KttTtk, FrameSource::Selected, false, true,
                                  rng));
    }
    if (name == "bccn_no_ttk") {
        return std::make_unique<TwoPathwayVariant>(
            name, BccnModel::init(cfg, LateralKind::KttTtk, FrameSource::Selected, true, false,
                                  rng));
    }
    if (name == "bccn_full") {
        return std::make_unique<TwoPathwayVariant>(
            name, BccnModel::init(cfg, LateralKind::KttTtk, FrameSource::Selected, true, true,
                                  rng));
    }
    throw ConfigError("unknown model variant '" + name + "'");
}

/// Small per-frame conv stack used by the single-frame fusion rows of the
/// prerequisite study: two strided convs and a global pool.
struct FrameCnn {
    Conv3dLayer conv1, conv2;

    static FrameCnn init(std::size_t c_in, Rng& rng) {
        FrameCnn f;
        f.conv1 = Conv3dLayer::init(c_in, 8, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, rng);
        f.conv2 = Conv3dLayer::init(8, 16, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}, rng);
        return f;
    }

    Tensor forward(const Tensor& frame) const {
        return global_avg_pool(relu(conv2.forward(relu(conv1.forward(frame)))));
    }

    std::vector<NamedParam> named_parameters(const std::string& prefix) {
        return {{prefix + "conv1.kernel", conv1.kernel},
                {prefix + "conv1.bias", conv1.bias},
                {prefix + "conv2.kernel", conv2.kernel},
                {prefix + "conv2.bias", conv2.bias}};
    }
};

/// The three prerequisite-study classifiers: a skeleton-attention branch,
/// optionally fused with conv features of one video frame (the clip's first
/// frame, or the frame the pretrained selector ranks highest).
class PrereqModel final : public Model {
public:
    enum class FrameChoice { None, Start, SelectedKeyframe };

    PrereqModel(std::string name, const SelectorConfig& sel_cfg, std::size_t num_classes,
                std::size_t video_channels, FrameChoice choice, Rng& rng)
        : name_(std::move(name)), choice_(choice), sel_(SelectorParams::init(sel_cfg, rng)) {
        std::size_t feat = sel_cfg.key_dim;
        if (choice_ != FrameChoice::None) {
            cnn_ = FrameCnn::init(video_channels, rng);
            feat += 16;
        }
        head_w_ = Tensor::zeros({num_classes, feat}, true);
        head_b_ = Tensor::zeros({num_classes}, true);
    }

    const std::string& name() const override { return name_; }

    Tensor forward(const ClipSample& s) const override {
        AttentionResult att = run_selector(s.skel_rows, sel_, sel_.config.num_keyframes);
        const Tensor context = vecmat(att.frame_probs, att.keys);
        Tensor feats = context;
        if (choice_ != FrameChoice::None) {
            std::size_t frame = 0;
            if (choice_ == FrameChoice::SelectedKeyframe) {
                if (!s.top_frame) {
                    throw ConfigError("clip '" + s.clip_id +
                                      "' lacks a selector top frame; run the selector first");
                }
                frame = *s.top_frame;
            }
            feats = concat_vec({context, cnn_->forward(gather_time(s.video, {frame}))});
        }
        return add(matvec(head_w_, feats), head_b_);
    }

    std::vector<Tensor> parameters() override {
        std::vector<Tensor> out;
        for (NamedParam& p : named_parameters()) out.push_back(p.tensor);
        return out;
    }

    std::vector<NamedParam> named_parameters() override {
        std::vector<NamedParam> out = sel_.named_parameters("skel.");
        if (cnn_) {
            for (NamedParam& p : cnn_->named_parameters("frame.")) out.push_back(p);
        }
        out.push_back({"head.w", head_w_});
        out.push_back({"head.b", head_b_});
        return out;
    }

private:
    std::string name_;
    FrameChoice choice_;
    SelectorParams sel_;
    std::optional<FrameCnn> cnn_;
    Tensor head_w_, head_b_;
};

}  // namespace bccn
