#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "bccn/errors.hpp"
#include "bccn/rng.hpp"

namespace bccn {

class Tensor;

namespace detail {

/// One node of the reverse-mode tape. Owns the value buffer; the gradient
/// buffer is allocated lazily. `backprop` distributes this node's gradient
/// into the parents' gradient buffers (additively).
struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    std::size_t numel() const { return data.size(); }

    std::vector<double>& grad_buffer() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        return grad;
    }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

}  // namespace detail

/// Dense row-major tensor of 64-bit floats with an optional tape node for
/// reverse-mode differentiation. Copies are cheap handles sharing one node;
/// values are immutable after construction except for the gradient buffer
/// (and leaf data under the optimizer, between tapes).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        return filled(std::move(shape), 0.0, requires_grad);
    }

    static Tensor filled(std::vector<std::size_t> shape, double value, bool requires_grad = false) {
        check_shape(shape);
        auto node = std::make_shared<detail::Node>();
        node->data.assign(detail::shape_numel(shape), value);
        node->shape = std::move(shape);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                            bool requires_grad = false) {
        check_shape(shape);
        if (detail::shape_numel(shape) != data.size()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + detail::shape_str(shape));
        }
        for (double v : data) {
            if (!std::isfinite(v)) throw ValueError("tensor constructed with non-finite value");
        }
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    /// Uniform(-bound, bound) fill; used by the Kaiming-style initializers.
    static Tensor uniform(std::vector<std::size_t> shape, double bound, Rng& rng,
                          bool requires_grad = false) {
        check_shape(shape);
        std::vector<double> data(detail::shape_numel(shape));
        for (double& v : data) v = rng.uniform(-bound, bound);
        return from_data(std::move(shape), std::move(data), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& data() const { return node_->data; }

    /// Direct mutation is reserved for leaf parameters (optimizer updates,
    /// checkpoint restore). Mutating an interior node would corrupt the tape.
    std::vector<double>& leaf_data() {
        if (node_->backprop) throw ValueError("leaf_data() called on a non-leaf tensor");
        return node_->data;
    }

    double value() const {
        if (numel() != 1) {
            throw ShapeError("value() called on non-scalar tensor of shape " +
                             detail::shape_str(shape()));
        }
        return node_->data[0];
    }

    double at(std::initializer_list<std::size_t> idx) const {
        return node_->data[flat_index(idx)];
    }

    /// Gradient buffer; zeros if backward never reached this tensor.
    const std::vector<double>& grad() const { return node_->grad_buffer(); }

    double grad_at(std::initializer_list<std::size_t> idx) const {
        return node_->grad_buffer()[flat_index(idx)];
    }

    void zero_grad() { node_->grad_buffer().assign(numel(), 0.0); }

    bool all_finite() const {
        for (double v : node_->data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    // --- tape construction (used by the ops layer) ---

    static Tensor make_result(std::vector<std::size_t> shape, std::vector<double> data,
                              std::vector<Tensor> parents,
                              std::function<void(detail::Node&)> backprop) {
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        bool needs = false;
        for (const Tensor& p : parents) needs = needs || p.requires_grad();
        if (needs) {
            node->requires_grad = true;
            node->parents.reserve(parents.size());
            for (const Tensor& p : parents) node->parents.push_back(p.node_);
            node->backprop = std::move(backprop);
        }
        return Tensor(std::move(node));
    }

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static void check_shape(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
        for (std::size_t e : shape) {
            if (e == 0) throw ShapeError("tensor shape " + detail::shape_str(shape) +
                                         " has a zero extent");
        }
    }

    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != rank()) {
            throw ShapeError("index rank " + std::to_string(idx.size()) +
                             " does not match tensor shape " + detail::shape_str(shape()));
        }
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            if (i >= node_->shape[axis]) {
                throw ShapeError("index out of range on axis " + std::to_string(axis) +
                                 " for shape " + detail::shape_str(shape()));
            }
            flat = flat * node_->shape[axis] + i;
            ++axis;
        }
        return flat;
    }

    std::shared_ptr<detail::Node> node_;
};

/// Reverse sweep from a scalar loss. Gradients accumulate additively into
/// every reachable node; parameters the graph never reached keep zero grad.
inline void backward(const Tensor& loss) {
    if (!loss.defined()) throw ValueError("backward() on an undefined tensor");
    if (loss.numel() != 1) {
        throw ShapeError("backward() requires a scalar loss, got shape " +
                         detail::shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw ValueError("backward() on a tensor detached from the tape");
    }

    // Iterative post-order DFS; recursion would overflow on long LSTM chains.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            detail::Node* child = node->parents[next_child++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (detail::Node* n : order) n->grad_buffer();
    loss.node()->grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
}

}  // namespace bccn
