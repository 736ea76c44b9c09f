#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "bccn/tensor.hpp"

namespace bccn {

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        for (int p = 0; p < 2; ++p) {
            if (!n.parents[p]->requires_grad) continue;
            auto& g = n.parents[p]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.parents[1]->data[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.parents[0]->data[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double k) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * k;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [k](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * k;
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (n.parents[0]->data[i] > 0.0) g[i] += n.grad[i];
        }
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
    return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = n.data[i];
            g[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

inline Tensor tanh_op(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
    return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.data[i];
            g[i] += n.grad[i] * (1.0 - y * y);
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::make_result({1}, {s}, {a}, [](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (double& v : g) v += n.grad[0];
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

inline Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    if (detail::shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + detail::shape_str(a.shape()) + " as " +
                         detail::shape_str(shape));
    }
    std::vector<double> out = a.data();
    return Tensor::make_result(std::move(shape), std::move(out), {a}, [](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

/// Scalar entry at a flat index (e.g. one logit).
inline Tensor pick(const Tensor& a, std::size_t flat_index) {
    if (flat_index >= a.numel()) {
        throw ShapeError("pick: index " + std::to_string(flat_index) + " out of range for " +
                         detail::shape_str(a.shape()));
    }
    return Tensor::make_result({1}, {a.data()[flat_index]}, {a}, [flat_index](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->grad_buffer()[flat_index] += n.grad[0];
    });
}

/// Concatenate rank-1 tensors.
inline Tensor concat_vec(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_vec: no inputs");
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 1) throw ShapeError("concat_vec: rank-1 inputs required");
        total += p.numel();
    }
    std::vector<double> out;
    out.reserve(total);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return Tensor::make_result({total}, std::move(out), parts, [](detail::Node& n) {
        std::size_t off = 0;
        for (auto& parent : n.parents) {
            const std::size_t len = parent->numel();
            if (parent->requires_grad) {
                auto& g = parent->grad_buffer();
                for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[off + i];
            }
            off += len;
        }
    });
}

/// Stack rank-1 tensors of equal length into an n x d matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    const std::size_t d = rows[0].numel();
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.numel() != d) {
            throw ShapeError("stack_rows: inconsistent row shape " + detail::shape_str(r.shape()));
        }
    }
    std::vector<double> out;
    out.reserve(rows.size() * d);
    for (const Tensor& r : rows) out.insert(out.end(), r.data().begin(), r.data().end());
    return Tensor::make_result({rows.size(), d}, std::move(out), rows, [d](detail::Node& n) {
        for (std::size_t r = 0; r < n.parents.size(); ++r) {
            if (!n.parents[r]->requires_grad) continue;
            auto& g = n.parents[r]->grad_buffer();
            for (std::size_t i = 0; i < d; ++i) g[i] += n.grad[r * d + i];
        }
    });
}

/// Row i of an n x d matrix as a rank-1 tensor.
inline Tensor gather_row(const Tensor& m, std::size_t row) {
    if (m.rank() != 2) throw ShapeError("gather_row: rank-2 input required, got " +
                                        detail::shape_str(m.shape()));
    if (row >= m.extent(0)) {
        throw ShapeError("gather_row: row " + std::to_string(row) + " out of range for " +
                         detail::shape_str(m.shape()));
    }
    const std::size_t d = m.extent(1);
    std::vector<double> out(m.data().begin() + static_cast<std::ptrdiff_t>(row * d),
                            m.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * d));
    return Tensor::make_result({d}, std::move(out), {m}, [row, d](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < d; ++i) g[row * d + i] += n.grad[i];
    });
}

/// Column means of an n x m matrix (mean over axis 0).
inline Tensor mean_rows(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("mean_rows: rank-2 input required, got " +
                                        detail::shape_str(m.shape()));
    const std::size_t rows = m.extent(0), cols = m.extent(1);
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += m.data()[r * cols + c];
    for (double& v : out) v /= static_cast<double>(rows);
    return Tensor::make_result({cols}, std::move(out), {m}, [rows, cols](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += n.grad[c] * inv;
    });
}

/// Column-wise max of an n x m matrix (max over axis 0); gradient routes to the
/// first row attaining the max.
inline Tensor max_rows(const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("max_rows: rank-2 input required, got " +
                                        detail::shape_str(m.shape()));
    const std::size_t rows = m.extent(0), cols = m.extent(1);
    std::vector<double> out(cols);
    auto argmax = std::make_shared<std::vector<std::size_t>>(cols, 0);
    for (std::size_t c = 0; c < cols; ++c) {
        double best = m.data()[c];
        std::size_t best_r = 0;
        for (std::size_t r = 1; r < rows; ++r) {
            const double v = m.data()[r * cols + c];
            if (v > best) {
                best = v;
                best_r = r;
            }
        }
        out[c] = best;
        (*argmax)[c] = best_r;
    }
    return Tensor::make_result({cols}, std::move(out), {m}, [argmax, cols](detail::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_buffer();
        for (std::size_t c = 0; c < cols; ++c) g[(*argmax)[c] * cols + c] += n.grad[c];
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: incompatible shapes " + detail::shape_str(a.shape()) + " and " +
                         detail::shape_str(b.shape()));
    }
    const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a.data()[i * k + kk];
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * b.data()[kk * m + j];
        }
    return Tensor::make_result({n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& nd) {
        const auto& ga = nd.grad;
        if (nd.parents[0]->requires_grad) {
            auto& g = nd.parents[0]->grad_buffer();
            const auto& bd = nd.parents[1]->data;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < m; ++j) s += ga[i * m + j] * bd[kk * m + j];
                    g[i * k + kk] += s;
                }
        }
        if (nd.parents[1]->requires_grad) {
            auto& g = nd.parents[1]->grad_buffer();
            const auto& ad = nd.parents[0]->data;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double av = ad[i * k + kk];
                    for (std::size_t j = 0; j < m; ++j) g[kk * m + j] += av * ga[i * m + j];
                }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: rank-2 input required, got " +
                                        detail::shape_str(a.shape()));
    const std::size_t n = a.extent(0), m = a.extent(1);
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a.data()[i * m + j];
    return Tensor::make_result({m, n}, std::move(out), {a}, [n, m](detail::Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[i * m + j] += nd.grad[j * n + i];
    });
}

/// W (m x n) times x (n) -> (m).
inline Tensor matvec(const Tensor& w, const Tensor& x) {
    if (w.rank() != 2 || x.rank() != 1 || w.extent(1) != x.numel()) {
        throw ShapeError("matvec: incompatible shapes " + detail::shape_str(w.shape()) + " and " +
                         detail::shape_str(x.shape()));
    }
    const std::size_t m = w.extent(0), n = w.extent(1);
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += w.data()[i * n + j] * x.data()[j];
        out[i] = s;
    }
    return Tensor::make_result({m}, std::move(out), {w, x}, [m, n](detail::Node& nd) {
        if (nd.parents[0]->requires_grad) {
            auto& g = nd.parents[0]->grad_buffer();
            const auto& xd = nd.parents[1]->data;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += nd.grad[i] * xd[j];
        }
        if (nd.parents[1]->requires_grad) {
            auto& g = nd.parents[1]->grad_buffer();
            const auto& wd = nd.parents[0]->data;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[j] += nd.grad[i] * wd[i * n + j];
        }
    });
}

/// Row combination p (n) times M (n x d) -> (d), i.e. sum_j p_j M_j.
inline Tensor vecmat(const Tensor& p, const Tensor& m) {
    if (p.rank() != 1 || m.rank() != 2 || p.numel() != m.extent(0)) {
        throw ShapeError("vecmat: incompatible shapes " + detail::shape_str(p.shape()) + " and " +
                         detail::shape_str(m.shape()));
    }
    const std::size_t n = m.extent(0), d = m.extent(1);
    std::vector<double> out(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double pj = p.data()[j];
        for (std::size_t c = 0; c < d; ++c) out[c] += pj * m.data()[j * d + c];
    }
    return Tensor::make_result({d}, std::move(out), {p, m}, [n, d](detail::Node& nd) {
        if (nd.parents[0]->requires_grad) {
            auto& g = nd.parents[0]->grad_buffer();
            const auto& md = nd.parents[1]->data;
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) s += nd.grad[c] * md[j * d + c];
                g[j] += s;
            }
        }
        if (nd.parents[1]->requires_grad) {
            auto& g = nd.parents[1]->grad_buffer();
            const auto& pd = nd.parents[0]->data;
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < d; ++c) g[j * d + c] += pd[j] * nd.grad[c];
        }
    });
}

/// out[i] = weight . in[i] + bias for every row; weight is d_out x d_in.
inline Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 ||
        input.extent(1) != weight.extent(1) || weight.extent(0) != bias.numel()) {
        throw ShapeError("affine: incompatible shapes input " + detail::shape_str(input.shape()) +
                         ", weight " + detail::shape_str(weight.shape()) + ", bias " +
                         detail::shape_str(bias.shape()));
    }
    const std::size_t n = input.extent(0), din = input.extent(1), dout = weight.extent(0);
    std::vector<double> out(n * dout);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < dout; ++o) {
            double s = bias.data()[o];
            for (std::size_t k = 0; k < din; ++k)
                s += input.data()[i * din + k] * weight.data()[o * din + k];
            out[i * dout + o] = s;
        }
    return Tensor::make_result(
        {n, dout}, std::move(out), {input, weight, bias}, [n, din, dout](detail::Node& nd) {
            const auto& g = nd.grad;
            if (nd.parents[0]->requires_grad) {
                auto& gi = nd.parents[0]->grad_buffer();
                const auto& wd = nd.parents[1]->data;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t o = 0; o < dout; ++o) {
                        const double gv = g[i * dout + o];
                        for (std::size_t k = 0; k < din; ++k) gi[i * din + k] += gv * wd[o * din + k];
                    }
            }
            if (nd.parents[1]->requires_grad) {
                auto& gw = nd.parents[1]->grad_buffer();
                const auto& id = nd.parents[0]->data;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t o = 0; o < dout; ++o) {
                        const double gv = g[i * dout + o];
                        for (std::size_t k = 0; k < din; ++k) gw[o * din + k] += gv * id[i * din + k];
                    }
            }
            if (nd.parents[2]->requires_grad) {
                auto& gb = nd.parents[2]->grad_buffer();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t o = 0; o < dout; ++o) gb[o] += g[i * dout + o];
            }
        });
}

// ---------------------------------------------------------------------------
// Softmax and losses
// ---------------------------------------------------------------------------

/// Max-subtracted softmax along one axis.
inline Tensor softmax(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         detail::shape_str(t.shape()));
    }
    const auto& shape = t.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t n = shape[axis];

    std::vector<double> out(t.numel());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = t.data()[base];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, t.data()[base + i * inner]);
            double z = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(t.data()[base + i * inner] - mx);
                out[base + i * inner] = e;
                z += e;
            }
            for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= z;
        }
    return Tensor::make_result(shape, std::move(out), {t}, [outer, inner, n](detail::Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    dot += nd.grad[base + i * inner] * nd.data[base + i * inner];
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t idx = base + i * inner;
                    g[idx] += nd.data[idx] * (nd.grad[idx] - dot);
                }
            }
    });
}

/// Cross-entropy of a rank-1 logit vector against a class index,
/// computed as logsumexp(logits) - logits[label].
inline Tensor cross_entropy(const Tensor& logits, std::size_t label) {
    if (logits.rank() != 1) {
        throw ShapeError("cross_entropy: rank-1 logits required, got " +
                         detail::shape_str(logits.shape()));
    }
    if (label >= logits.numel()) {
        throw ValueError("cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(logits.numel()) + " classes");
    }
    const std::size_t c = logits.numel();
    double mx = logits.data()[0];
    for (double v : logits.data()) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits.data()) z += std::exp(v - mx);
    const double loss = mx + std::log(z) - logits.data()[label];
    return Tensor::make_result({1}, {loss}, {logits}, [label, c, mx, z](detail::Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_buffer();
        const auto& l = nd.parents[0]->data;
        for (std::size_t i = 0; i < c; ++i) {
            double p = std::exp(l[i] - mx) / z;
            if (i == label) p -= 1.0;
            g[i] += nd.grad[0] * p;
        }
    });
}

// ---------------------------------------------------------------------------
// 3-D convolution
// ---------------------------------------------------------------------------

using Triple = std::array<std::size_t, 3>;

/// conv3d over a C x T x H x W input with a Co x Ci x kT x kH x kW kernel.
/// Output extent per axis is floor((X + 2p - k) / s) + 1.
inline Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     Triple stride = {1, 1, 1}, Triple padding = {0, 0, 0}) {
    if (input.rank() != 4 || kernel.rank() != 5 || bias.rank() != 1) {
        throw ShapeError("conv3d: need input rank 4, kernel rank 5, bias rank 1; got input " +
                         detail::shape_str(input.shape()) + ", kernel " +
                         detail::shape_str(kernel.shape()) + ", bias " +
                         detail::shape_str(bias.shape()));
    }
    const std::size_t ci = input.extent(0), ti = input.extent(1), hi = input.extent(2),
                      wi = input.extent(3);
    const std::size_t co = kernel.extent(0), kci = kernel.extent(1), kt = kernel.extent(2),
                      kh = kernel.extent(3), kw = kernel.extent(4);
    if (kci != ci || bias.numel() != co) {
        throw ShapeError("conv3d: channel mismatch, input " + detail::shape_str(input.shape()) +
                         " vs kernel " + detail::shape_str(kernel.shape()));
    }
    for (std::size_t s : stride)
        if (s == 0) throw ShapeError("conv3d: stride must be >= 1");
    const std::size_t in_ext[3] = {ti, hi, wi};
    const std::size_t k_ext[3] = {kt, kh, kw};
    std::size_t out_ext[3];
    for (int a = 0; a < 3; ++a) {
        const std::size_t padded = in_ext[a] + 2 * padding[a];
        if (k_ext[a] > padded) {
            throw ShapeError("conv3d: kernel " + detail::shape_str(kernel.shape()) +
                             " exceeds padded input " + detail::shape_str(input.shape()));
        }
        out_ext[a] = (padded - k_ext[a]) / stride[a] + 1;
    }
    const std::size_t to = out_ext[0], ho = out_ext[1], wo = out_ext[2];

    std::vector<double> out(co * to * ho * wo);
    const auto& in = input.data();
    const auto& ker = kernel.data();
    for (std::size_t c = 0; c < co; ++c) {
        for (std::size_t t = 0; t < to; ++t) {
            const std::ptrdiff_t t0 =
                static_cast<std::ptrdiff_t>(t * stride[0]) - static_cast<std::ptrdiff_t>(padding[0]);
            const std::size_t kt_lo = t0 < 0 ? static_cast<std::size_t>(-t0) : 0;
            const std::size_t kt_hi =
                std::min(kt, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ti) - t0));
            for (std::size_t h = 0; h < ho; ++h) {
                const std::ptrdiff_t h0 = static_cast<std::ptrdiff_t>(h * stride[1]) -
                                          static_cast<std::ptrdiff_t>(padding[1]);
                const std::size_t kh_lo = h0 < 0 ? static_cast<std::size_t>(-h0) : 0;
                const std::size_t kh_hi =
                    std::min(kh, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(hi) - h0));
                for (std::size_t w = 0; w < wo; ++w) {
                    const std::ptrdiff_t w0 = static_cast<std::ptrdiff_t>(w * stride[2]) -
                                              static_cast<std::ptrdiff_t>(padding[2]);
                    const std::size_t kw_lo = w0 < 0 ? static_cast<std::size_t>(-w0) : 0;
                    const std::size_t kw_hi =
                        std::min(kw, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(wi) - w0));
                    double acc = bias.data()[c];
                    for (std::size_t cc = 0; cc < ci; ++cc)
                        for (std::size_t a = kt_lo; a < kt_hi; ++a) {
                            const std::size_t tin = static_cast<std::size_t>(t0) + a;
                            for (std::size_t b = kh_lo; b < kh_hi; ++b) {
                                const std::size_t hin = static_cast<std::size_t>(h0) + b;
                                const std::size_t in_base =
                                    ((cc * ti + tin) * hi + hin) * wi + static_cast<std::size_t>(w0);
                                const std::size_t k_base =
                                    (((c * ci + cc) * kt + a) * kh + b) * kw;
                                double s = 0.0;
                                for (std::size_t d = kw_lo; d < kw_hi; ++d)
                                    s += in[in_base + d] * ker[k_base + d];
                                acc += s;
                            }
                        }
                    out[((c * to + t) * ho + h) * wo + w] = acc;
                }
            }
        }
    }

    const std::size_t sT = stride[0], sH = stride[1], sW = stride[2];
    const std::size_t pT = padding[0], pH = padding[1], pW = padding[2];
    auto backprop = [=](detail::Node& nd) {
        const bool need_in = nd.parents[0]->requires_grad;
        const bool need_ker = nd.parents[1]->requires_grad;
        const bool need_bias = nd.parents[2]->requires_grad;
        const auto& ind = nd.parents[0]->data;
        const auto& kerd = nd.parents[1]->data;
        auto* gin = need_in ? &nd.parents[0]->grad_buffer() : nullptr;
        auto* gker = need_ker ? &nd.parents[1]->grad_buffer() : nullptr;
        auto* gbias = need_bias ? &nd.parents[2]->grad_buffer() : nullptr;
        for (std::size_t c = 0; c < co; ++c) {
            for (std::size_t t = 0; t < to; ++t) {
                const std::ptrdiff_t t0 =
                    static_cast<std::ptrdiff_t>(t * sT) - static_cast<std::ptrdiff_t>(pT);
                const std::size_t kt_lo = t0 < 0 ? static_cast<std::size_t>(-t0) : 0;
                const std::size_t kt_hi =
                    std::min(kt, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(ti) - t0));
                for (std::size_t h = 0; h < ho; ++h) {
                    const std::ptrdiff_t h0 =
                        static_cast<std::ptrdiff_t>(h * sH) - static_cast<std::ptrdiff_t>(pH);
                    const std::size_t kh_lo = h0 < 0 ? static_cast<std::size_t>(-h0) : 0;
                    const std::size_t kh_hi =
                        std::min(kh, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(hi) - h0));
                    for (std::size_t w = 0; w < wo; ++w) {
                        const double gv = nd.grad[((c * to + t) * ho + h) * wo + w];
                        if (gv == 0.0) continue;
                        if (need_bias) (*gbias)[c] += gv;
                        if (!need_in && !need_ker) continue;
                        const std::ptrdiff_t w0 =
                            static_cast<std::ptrdiff_t>(w * sW) - static_cast<std::ptrdiff_t>(pW);
                        const std::size_t kw_lo = w0 < 0 ? static_cast<std::size_t>(-w0) : 0;
                        const std::size_t kw_hi = std::min(
                            kw, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(wi) - w0));
                        for (std::size_t cc = 0; cc < ci; ++cc)
                            for (std::size_t a = kt_lo; a < kt_hi; ++a) {
                                const std::size_t tin = static_cast<std::size_t>(t0) + a;
                                for (std::size_t b = kh_lo; b < kh_hi; ++b) {
                                    const std::size_t hin = static_cast<std::size_t>(h0) + b;
                                    const std::size_t in_base = ((cc * ti + tin) * hi + hin) * wi +
                                                                static_cast<std::size_t>(w0);
                                    const std::size_t k_base =
                                        (((c * ci + cc) * kt + a) * kh + b) * kw;
                                    if (need_in && need_ker) {
                                        for (std::size_t d = kw_lo; d < kw_hi; ++d) {
                                            (*gin)[in_base + d] += gv * kerd[k_base + d];
                                            (*gker)[k_base + d] += gv * ind[in_base + d];
                                        }
                                    } else if (need_in) {
                                        for (std::size_t d = kw_lo; d < kw_hi; ++d)
                                            (*gin)[in_base + d] += gv * kerd[k_base + d];
                                    } else {
                                        for (std::size_t d = kw_lo; d < kw_hi; ++d)
                                            (*gker)[k_base + d] += gv * ind[in_base + d];
                                    }
                                }
                            }
                    }
                }
            }
        }
    };
    return Tensor::make_result({co, to, ho, wo}, std::move(out), {input, kernel, bias},
                               std::move(backprop));
}

/// Mean over (T, H, W) of a C x T x H x W map -> rank-1 C.
inline Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("global_avg_pool: rank-4 input required, got " +
                                        detail::shape_str(x.shape()));
    const std::size_t c = x.extent(0), n = x.extent(1) * x.extent(2) * x.extent(3);
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += x.data()[i * n + j];
        out[i] = s / static_cast<double>(n);
    }
    return Tensor::make_result({c}, std::move(out), {x}, [c, n](detail::Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_buffer();
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < c; ++i) {
            const double gv = nd.grad[i] * inv;
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gv;
        }
    });
}

/// Gather time slices of a C x T x H x W tensor in the given order.
inline Tensor gather_time(const Tensor& x, const std::vector<std::size_t>& indices) {
    if (x.rank() != 4) throw ShapeError("gather_time: rank-4 input required, got " +
                                        detail::shape_str(x.shape()));
    if (indices.empty()) throw ShapeError("gather_time: empty index list");
    const std::size_t c = x.extent(0), t = x.extent(1), plane = x.extent(2) * x.extent(3);
    for (std::size_t i : indices) {
        if (i >= t) {
            throw ShapeError("gather_time: index " + std::to_string(i) +
                             " out of range for T=" + std::to_string(t));
        }
    }
    const std::size_t k = indices.size();
    std::vector<double> out(c * k * plane);
    for (std::size_t cc = 0; cc < c; ++cc)
        for (std::size_t j = 0; j < k; ++j) {
            const double* src = x.data().data() + (cc * t + indices[j]) * plane;
            std::copy(src, src + plane, out.data() + (cc * k + j) * plane);
        }
    auto idx = std::make_shared<std::vector<std::size_t>>(indices);
    return Tensor::make_result({c, k, x.extent(2), x.extent(3)}, std::move(out), {x},
                               [idx, c, t, plane, k](detail::Node& nd) {
                                   if (!nd.parents[0]->requires_grad) return;
                                   auto& g = nd.parents[0]->grad_buffer();
                                   for (std::size_t cc = 0; cc < c; ++cc)
                                       for (std::size_t j = 0; j < k; ++j) {
                                           const std::size_t dst = (cc * t + (*idx)[j]) * plane;
                                           const std::size_t src = (cc * k + j) * plane;
                                           for (std::size_t p = 0; p < plane; ++p)
                                               g[dst + p] += nd.grad[src + p];
                                       }
                               });
}

/// Broadcast per-segment features over time: out[:, t] = x[:, assign[t]].
inline Tensor inflate_time(const Tensor& x, const std::vector<std::size_t>& assign) {
    if (x.rank() != 4) throw ShapeError("inflate_time: rank-4 input required, got " +
                                        detail::shape_str(x.shape()));
    const std::size_t c = x.extent(0), k = x.extent(1), plane = x.extent(2) * x.extent(3);
    const std::size_t t = assign.size();
    if (t == 0) throw ShapeError("inflate_time: empty assignment");
    for (std::size_t a : assign) {
        if (a >= k) {
            throw ShapeError("inflate_time: segment " + std::to_string(a) +
                             " out of range for K=" + std::to_string(k));
        }
    }
    std::vector<double> out(c * t * plane);
    for (std::size_t cc = 0; cc < c; ++cc)
        for (std::size_t tt = 0; tt < t; ++tt) {
            const double* src = x.data().data() + (cc * k + assign[tt]) * plane;
            std::copy(src, src + plane, out.data() + (cc * t + tt) * plane);
        }
    auto amap = std::make_shared<std::vector<std::size_t>>(assign);
    return Tensor::make_result({c, t, x.extent(2), x.extent(3)}, std::move(out), {x},
                               [amap, c, k, plane, t](detail::Node& nd) {
                                   if (!nd.parents[0]->requires_grad) return;
                                   auto& g = nd.parents[0]->grad_buffer();
                                   for (std::size_t cc = 0; cc < c; ++cc)
                                       for (std::size_t tt = 0; tt < t; ++tt) {
                                           const std::size_t dst = (cc * k + (*amap)[tt]) * plane;
                                           const std::size_t src = (cc * t + tt) * plane;
                                           for (std::size_t p = 0; p < plane; ++p)
                                               g[dst + p] += nd.grad[src + p];
                                       }
                               });
}

/// Concatenate rank-4 tensors along the channel axis.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const std::size_t t = parts[0].extent(1), h = parts[0].extent(2), w = parts[0].extent(3);
    std::size_t ctot = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 4 || p.extent(1) != t || p.extent(2) != h || p.extent(3) != w) {
            throw ShapeError("concat_channels: shape mismatch at " + detail::shape_str(p.shape()));
        }
        ctot += p.extent(0);
    }
    std::vector<double> out;
    out.reserve(ctot * t * h * w);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return Tensor::make_result({ctot, t, h, w}, std::move(out), parts, [](detail::Node& nd) {
        std::size_t off = 0;
        for (auto& parent : nd.parents) {
            const std::size_t len = parent->numel();
            if (parent->requires_grad) {
                auto& g = parent->grad_buffer();
                for (std::size_t i = 0; i < len; ++i) g[i] += nd.grad[off + i];
            }
            off += len;
        }
    });
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Gate parameters of one LSTM cell. W_* are hidden x input, U_* are
/// hidden x hidden, biases are hidden.
struct LstmParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    Tensor w_i, w_f, w_g, w_o;
    Tensor u_i, u_f, u_g, u_o;
    Tensor b_i, b_f, b_g, b_o;

    static LstmParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
        LstmParams p;
        p.input_dim = input_dim;
        p.hidden_dim = hidden_dim;
        const double bw = 1.0 / std::sqrt(static_cast<double>(input_dim));
        const double bu = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        for (Tensor* w : {&p.w_i, &p.w_f, &p.w_g, &p.w_o})
            *w = Tensor::uniform({hidden_dim, input_dim}, bw, rng, true);
        for (Tensor* u : {&p.u_i, &p.u_f, &p.u_g, &p.u_o})
            *u = Tensor::uniform({hidden_dim, hidden_dim}, bu, rng, true);
        for (Tensor* b : {&p.b_i, &p.b_g, &p.b_o}) *b = Tensor::zeros({hidden_dim}, true);
        // Forget bias 1.0 eases gradient flow through early training.
        p.b_f = Tensor::filled({hidden_dim}, 1.0, true);
        return p;
    }

    std::vector<Tensor> parameters() {
        return {w_i, w_f, w_g, w_o, u_i, u_f, u_g, u_o, b_i, b_f, b_g, b_o};
    }

    void validate(const Tensor& x, const Tensor& h, const Tensor& c) const {
        if (x.rank() != 1 || x.numel() != input_dim || h.rank() != 1 || h.numel() != hidden_dim ||
            c.rank() != 1 || c.numel() != hidden_dim) {
            throw ShapeError("lstm_step: got x " + detail::shape_str(x.shape()) + ", h " +
                             detail::shape_str(h.shape()) + ", c " + detail::shape_str(c.shape()) +
                             " for cell (input_dim=" + std::to_string(input_dim) +
                             ", hidden_dim=" + std::to_string(hidden_dim) + ")");
        }
    }
};

struct LstmState {
    Tensor h;
    Tensor c;
};

/// One recurrence step: i,f,o = sigmoid(Wx + Uh + b), g = tanh(Wx + Uh + b),
/// c' = f*c + i*g, h' = o*tanh(c').
inline LstmState lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                           const LstmParams& p) {
    p.validate(x, h, c);
    auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
        return add(add(matvec(w, x), matvec(u, h)), b);
    };
    const Tensor i = sigmoid(gate(p.w_i, p.u_i, p.b_i));
    const Tensor f = sigmoid(gate(p.w_f, p.u_f, p.b_f));
    const Tensor g = tanh_op(gate(p.w_g, p.u_g, p.b_g));
    const Tensor o = sigmoid(gate(p.w_o, p.u_o, p.b_o));
    const Tensor c_next = add(mul(f, c), mul(i, g));
    const Tensor h_next = mul(o, tanh_op(c_next));
    return {h_next, c_next};
}

// ---------------------------------------------------------------------------
// Initialization helpers
// ---------------------------------------------------------------------------

/// Kaiming-style fan-in scaled uniform init.
inline Tensor kaiming_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), bound, rng, true);
}

}  // namespace bccn
