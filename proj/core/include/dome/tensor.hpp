#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "dome/errors.hpp"

namespace dome {

namespace detail {

/// One node of the computation graph.  Tensors are thin handles over nodes;
/// operations allocate a fresh node whose backprop closure scatters the
/// node's gradient into its parents.
struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;  // grad-requiring inputs only
    std::function<void(TensorNode&)> backprop;

    std::size_t size() const { return value.size(); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

/// Thread-local switch controlling whether operations record the graph.
/// Inference paths disable it to skip closure allocation entirely.
struct GradMode {
    static bool enabled();
    static void set(bool on);
};

/// RAII guard: disables gradient recording for its scope.
struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Dense 64-bit float tensor (1-D or 2-D in practice) participating in
/// reverse-mode differentiation.  Copying a Tensor copies the handle, not
/// the storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double fill,
                       bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> data,
                       bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    /// 1-row matrix [1 x n].
    static Tensor row(std::vector<double> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }

    const std::vector<std::size_t>& shape() const { return node()->shape; }
    std::size_t ndim() const { return node()->shape.size(); }
    std::size_t size() const { return node()->value.size(); }
    /// Extent of axis 0 (rows of a matrix, length of a vector).
    std::size_t rows() const { return node()->shape.at(0); }
    /// Extent of axis 1 of a matrix.
    std::size_t cols() const { return node()->shape.at(1); }

    const std::vector<double>& data() const { return node()->value; }
    /// Mutable storage access.  Only meaningful before the tensor is used in
    /// a forward pass (inputs) or for in-place optimizer updates on leaves.
    std::vector<double>& data() { return node()->value; }

    double at(std::size_t i) const { return node()->value.at(i); }
    double at(std::size_t r, std::size_t c) const {
        return node()->value.at(r * cols() + c);
    }

    bool requires_grad() const { return node()->requires_grad; }
    void set_requires_grad(bool on) { node()->requires_grad = on; }

    bool has_grad() const { return !node()->grad.empty(); }
    /// Accumulated gradient.  Throws StateError when never populated.
    const std::vector<double>& grad() const;
    /// Allocates (or resets) the gradient buffer to zeros.
    void zero_grad() {
        node()->grad.assign(node()->value.size(), 0.0);
    }

    /// Reverse sweep from this scalar: populates grad on every reachable
    /// grad-requiring tensor, accumulating (summing) over paths.
    void backward() const;

    std::shared_ptr<detail::TensorNode> node_ptr() const { return node_; }
    detail::TensorNode* node() const {
        if (!node_) throw StateError("tensor is undefined");
        return node_.get();
    }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_result(std::vector<std::size_t> shape,
                              std::vector<double> value,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::TensorNode&)> backprop);
};

/// Allocates a result node for an operation.  `inputs` lists every tensor the
/// backprop closure writes gradients into; the node requires grad when grad
/// mode is on and any input requires it, otherwise the closure is dropped.
Tensor make_result(std::vector<std::size_t> shape, std::vector<double> value,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::TensorNode&)> backprop);

}  // namespace dome
