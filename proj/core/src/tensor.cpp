#include "dome/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace dome {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive");
        n *= e;
    }
    return n;
}

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double fill, bool requires_grad) {
    auto n = std::make_shared<detail::TensorNode>();
    n->value.assign(shape_numel(shape), fill);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data,
                    bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("data length does not match shape");
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
    const std::size_t n = data.size();
    return from({1, n}, std::move(data), requires_grad);
}

const std::vector<double>& Tensor::grad() const {
    detail::TensorNode* n = node();
    if (n->grad.empty())
        throw StateError("gradient not populated; run backward() first");
    return n->grad;
}

Tensor make_result(std::vector<std::size_t> shape, std::vector<double> value,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::TensorNode&)> backprop) {
    if (shape_numel(shape) != value.size())
        throw ShapeError("result length does not match shape");
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (GradMode::enabled()) {
        for (const Tensor& in : inputs) {
            if (in.defined() && in.requires_grad()) {
                n->requires_grad = true;
                n->parents.push_back(in.node_ptr());
            }
        }
        if (n->requires_grad) n->backprop = std::move(backprop);
    }
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    detail::TensorNode* root = node();
    if (root->size() != 1)
        throw ShapeError("backward() requires a scalar tensor");

    // Iterative post-order DFS; reverse post-order is a valid topological
    // order for the reverse sweep.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> visited;
    struct Frame {
        detail::TensorNode* n;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (root->requires_grad) {
        stack.push_back({root, 0});
        visited.insert(root);
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            detail::TensorNode* p = f.n->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* n = *it;
        n->ensure_grad();
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace dome
