#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "bccn/ops.hpp"
#include "bccn/serialize.hpp"
#include "bccn/tensor.hpp"

namespace bccn {

/// T frames of J joints, (x, y, z) each, row-major T x J x 3.
struct SkeletonSequence {
    std::string clip_id;
    std::size_t label = 0;
    std::size_t frames = 0;
    std::size_t joints = 0;
    std::vector<double> coords;

    void validate() const {
        if (frames == 0 || joints == 0) {
            throw ValueError("skeleton sequence needs at least one frame and one joint");
        }
        if (coords.size() != frames * joints * 3) {
            throw ShapeError("skeleton '" + clip_id + "' has " + std::to_string(coords.size()) +
                             " coordinates, expected " + std::to_string(frames * joints * 3));
        }
        for (double v : coords) {
            if (!std::isfinite(v)) {
                throw ValueError("skeleton '" + clip_id + "' contains a non-finite coordinate");
            }
        }
    }

    double at(std::size_t t, std::size_t j, std::size_t axis) const {
        return coords[(t * joints + j) * 3 + axis];
    }
};

enum class ScoreAggregation { Mean, Max };

struct SelectorConfig {
    std::size_t hidden_dim = 64;
    std::size_t key_dim = 32;
    std::size_t num_keyframes = 4;
    std::size_t joint_count = 13;
    ScoreAggregation aggregation = ScoreAggregation::Mean;

    void validate() const {
        if (key_dim < 1 || hidden_dim < key_dim) {
            throw ConfigError("selector needs hidden_dim >= key_dim >= 1, got hidden_dim=" +
                              std::to_string(hidden_dim) + ", key_dim=" + std::to_string(key_dim));
        }
        if (num_keyframes < 1) throw ConfigError("selector needs num_keyframes >= 1");
        if (joint_count < 1) throw ConfigError("selector needs joint_count >= 1");
    }
};

/// LSTM encoder, two-layer query MLP, and the shared per-frame key map
/// (a 1x1 convolution over time is exactly one affine map applied per frame).
struct SelectorParams {
    SelectorConfig config;
    LstmParams lstm;
    Tensor query_w1, query_b1;
    Tensor query_w2, query_b2;
    Tensor key_w, key_b;

    static SelectorParams init(const SelectorConfig& config, Rng& rng) {
        config.validate();
        SelectorParams p;
        p.config = config;
        const std::size_t in = config.joint_count * 3;
        p.lstm = LstmParams::init(in, config.hidden_dim, rng);
        p.query_w1 = kaiming_uniform({config.key_dim, config.hidden_dim}, config.hidden_dim, rng);
        p.query_b1 = Tensor::zeros({config.key_dim}, true);
        // zero final query layer: attention starts uniform, so the aux head
        // fits the plain frame average before the encoder can steer it
        p.query_w2 = Tensor::zeros({config.key_dim, config.key_dim}, true);
        p.query_b2 = Tensor::zeros({config.key_dim}, true);
        p.key_w = kaiming_uniform({config.key_dim, in}, in, rng);
        p.key_b = Tensor::zeros({config.key_dim}, true);
        return p;
    }

    std::vector<Tensor> parameters() {
        std::vector<Tensor> out = lstm.parameters();
        for (const Tensor& t : {query_w1, query_b1, query_w2, query_b2, key_w, key_b})
            out.push_back(t);
        return out;
    }

    std::vector<NamedParam> named_parameters(const std::string& prefix) {
        static const char* lstm_names[] = {"lstm.w_i", "lstm.w_f", "lstm.w_g", "lstm.w_o",
                                           "lstm.u_i", "lstm.u_f", "lstm.u_g", "lstm.u_o",
                                           "lstm.b_i", "lstm.b_f", "lstm.b_g", "lstm.b_o"};
        std::vector<NamedParam> out;
        auto lp = lstm.parameters();
        for (std::size_t i = 0; i < lp.size(); ++i) out.push_back({prefix + lstm_names[i], lp[i]});
        out.push_back({prefix + "query_w1", query_w1});
        out.push_back({prefix + "query_b1", query_b1});
        out.push_back({prefix + "query_w2", query_w2});
        out.push_back({prefix + "query_b2", query_b2});
        out.push_back({prefix + "key_w", key_w});
        out.push_back({prefix + "key_b", key_b});
        return out;
    }
};

/// Affine classifier over the soft-attention context vector. Zero-initialized
/// so the first loss of an untrained run equals ln(num_classes).
struct AuxHead {
    std::size_t num_classes = 0;
    Tensor w, b;

    static AuxHead init(std::size_t key_dim, std::size_t num_classes) {
        if (num_classes < 2) throw ConfigError("aux head needs at least 2 classes");
        AuxHead h;
        h.num_classes = num_classes;
        h.w = Tensor::zeros({num_classes, key_dim}, true);
        h.b = Tensor::zeros({num_classes}, true);
        return h;
    }

    std::vector<Tensor> parameters() { return {w, b}; }

    std::vector<NamedParam> named_parameters(const std::string& prefix) {
        return {{prefix + "w", w}, {prefix + "b", b}};
    }
};

/// Flattens a skeleton into T x (J*3) rows, centered on the clip's mean joint
/// position and scaled by the clip's coordinate standard deviation.
inline Tensor skeleton_rows(const SkeletonSequence& skel) {
    skel.validate();
    const std::size_t t = skel.frames, j = skel.joints;
    double mean[3] = {0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < t * j; ++i)
        for (int a = 0; a < 3; ++a) mean[a] += skel.coords[i * 3 + a];
    for (double& m : mean) m /= static_cast<double>(t * j);
    double var = 0.0;
    for (std::size_t i = 0; i < t * j; ++i)
        for (int a = 0; a < 3; ++a) {
            const double d = skel.coords[i * 3 + a] - mean[a];
            var += d * d;
        }
    var /= static_cast<double>(t * j * 3);
    const double inv_std = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    std::vector<double> rows(t * j * 3);
    for (std::size_t i = 0; i < t * j; ++i)
        for (int a = 0; a < 3; ++a)
            rows[i * 3 + a] = (skel.coords[i * 3 + a] - mean[a]) * inv_std;
    return Tensor::from_data({t, j * 3}, std::move(rows));
}

/// Runs the LSTM over the rows from zero initial state; row t is h_t.
inline Tensor encode_sequence(const Tensor& rows, const LstmParams& params) {
    if (rows.rank() != 2 || rows.extent(1) != params.input_dim) {
        throw ShapeError("encode_sequence: rows " + detail::shape_str(rows.shape()) +
                         " vs cell input_dim " + std::to_string(params.input_dim));
    }
    const std::size_t t = rows.extent(0);
    LstmState state{Tensor::zeros({params.hidden_dim}), Tensor::zeros({params.hidden_dim})};
    std::vector<Tensor> hidden;
    hidden.reserve(t);
    for (std::size_t i = 0; i < t; ++i) {
        state = lstm_step(gather_row(rows, i), state.h, state.c, params);
        hidden.push_back(state.h);
    }
    return stack_rows(hidden);
}

inline Tensor compute_queries(const Tensor& hidden, const SelectorParams& p) {
    return affine(relu(affine(hidden, p.query_w1, p.query_b1)), p.query_w2, p.query_b2);
}

inline Tensor compute_keys(const Tensor& rows, const Tensor& key_w, const Tensor& key_b) {
    return affine(rows, key_w, key_b);
}

/// scores[i][j] = queries[i] . keys[j].
inline Tensor attention_scores(const Tensor& queries, const Tensor& keys) {
    if (queries.rank() != 2 || keys.rank() != 2 || queries.extent(1) != keys.extent(1)) {
        throw ShapeError("attention_scores: queries " + detail::shape_str(queries.shape()) +
                         " vs keys " + detail::shape_str(keys.shape()));
    }
    return matmul(queries, transpose(keys));
}

/// Top-K indices of a probability vector, ties broken toward the lowest
/// index, result ascending.
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& probs, std::size_t k) {
    if (k < 1 || k > probs.size()) {
        throw ValueError("top-K selection: K=" + std::to_string(k) + " out of range for T=" +
                         std::to_string(probs.size()));
    }
    std::vector<std::size_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

struct Selection {
    std::vector<double> frame_probs;
    std::vector<std::size_t> selected;
};

/// Aggregates the score matrix over the query axis, softmaxes, and picks the
/// K most probable frames.
inline Selection select_keyframes(const Tensor& scores, std::size_t k,
                                  ScoreAggregation agg = ScoreAggregation::Mean) {
    if (scores.rank() != 2 || scores.extent(0) != scores.extent(1)) {
        throw ShapeError("select_keyframes: square score matrix required, got " +
                         detail::shape_str(scores.shape()));
    }
    const Tensor s = agg == ScoreAggregation::Mean ? mean_rows(scores) : max_rows(scores);
    const Tensor probs = softmax(s, 0);
    Selection out;
    out.frame_probs = probs.data();
    out.selected = top_k_indices(out.frame_probs, k);
    return out;
}

struct AttentionResult {
    Tensor queries;
    Tensor keys;
    Tensor scores;
    Tensor frame_probs;
    std::vector<std::size_t> selected;
};

/// Full selector pass. frame_probs stays on the tape (soft attention); the
/// selected index set is the discrete, non-differentiable output.
inline AttentionResult run_selector(const Tensor& rows, const SelectorParams& p, std::size_t k) {
    AttentionResult r;
    const Tensor hidden = encode_sequence(rows, p.lstm);
    r.queries = compute_queries(hidden, p);
    r.keys = compute_keys(rows, p.key_w, p.key_b);
    r.scores = attention_scores(r.queries, r.keys);
    const Tensor s = p.config.aggregation == ScoreAggregation::Mean ? mean_rows(r.scores)
                                                                    : max_rows(r.scores);
    r.frame_probs = softmax(s, 0);
    r.selected = top_k_indices(r.frame_probs.data(), k);
    return r;
}

/// Soft-attention auxiliary objective: context = sum_j probs[j] * keys[j],
/// then an affine head and cross-entropy. Differentiable end to end.
inline Tensor selector_loss(const Tensor& rows, std::size_t label, const SelectorParams& p,
                            const AuxHead& head) {
    if (label >= head.num_classes) {
        throw ValueError("selector_loss: label " + std::to_string(label) + " out of range for " +
                         std::to_string(head.num_classes) + " classes");
    }
    AttentionResult r = run_selector(rows, p, p.config.num_keyframes);
    const Tensor context = vecmat(r.frame_probs, r.keys);
    const Tensor logits = add(matvec(head.w, context), head.b);
    return cross_entropy(logits, label);
}

}  // namespace bccn
