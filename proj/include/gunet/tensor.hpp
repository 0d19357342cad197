#pragma once

// Dense float64 tensors with a reverse-mode differentiation tape.
//
// A Tensor is a cheap handle to shared storage. Every primitive in ops.hpp
// produces a new tensor that remembers its inputs and a backward rule when
// any input requires a gradient; `backward(loss)` walks that graph in reverse
// topological order and accumulates exact analytic gradients.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gunet/error.hpp"

namespace gunet {

using Index = std::int64_t;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool has_grad = false;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Reads this->grad and accumulates into inputs that require a gradient.
    std::function<void(TensorImpl&)> backward;

    std::vector<double>& grad_buffer() {
        if (!has_grad) {
            grad.assign(data.size(), 0.0);
            has_grad = true;
        }
        return grad;
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : impl_(std::make_shared<detail::TensorImpl>()) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("tensor", shape, Shape{data.size()}, "data length must equal product of extents");
        }
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
        impl_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }
    static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
    static Tensor vector(std::vector<double> v) {
        const auto n = v.size();
        return Tensor(Shape{n}, std::move(v));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v, bool requires_grad = false) {
        return Tensor(Shape{rows, cols}, std::move(v), requires_grad);
    }

    bool defined() const noexcept { return static_cast<bool>(impl_); }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    /// Row count, treating rank-1 tensors as a column.
    std::size_t rows() const { return rank() == 0 ? 1 : impl_->shape[0]; }
    /// Row width, treating rank-1 tensors as a column.
    std::size_t cols() const {
        std::size_t inner = 1;
        for (std::size_t i = 1; i < impl_->shape.size(); ++i) inner *= impl_->shape[i];
        return inner;
    }

    std::span<const double> data() const { return impl_->data; }
    std::span<double> data_mut() { return impl_->data; }
    double item() const {
        if (numel() != 1) throw ShapeError("item", shape(), Shape{}, "tensor is not a scalar");
        return impl_->data[0];
    }
    double operator[](std::size_t i) const { return impl_->data[i]; }
    double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return impl_->has_grad; }
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> grad_mut() { return impl_->grad_buffer(); }
    void zero_grad() {
        impl_->grad.clear();
        impl_->has_grad = false;
    }

    const char* op_name() const { return impl_->op; }

    /// Copy of the values with no history.
    Tensor detach() const { return Tensor(shape(), impl_->data, false); }

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

/// Wraps a freshly computed value into a tensor wired into the tape.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                          std::function<void(TensorImpl&)> backward) {
    Tensor out(std::move(shape), std::move(data));
    auto& impl = *out.impl();
    impl.op = op;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
        impl.requires_grad = true;
        impl.inputs.reserve(inputs.size());
        for (auto& t : inputs) impl.inputs.push_back(t.impl());
        impl.backward = std::move(backward);
    }
    return out;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed from scratch each sweep.
inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward", loss.defined() ? loss.shape() : Shape{}, Shape{}, "loss must be a scalar");
    }
    if (!loss.requires_grad()) return;

    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(loss.impl().get(), 0);
    seen.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            auto* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (auto* node : order) {
        if (!node->inputs.empty()) {
            node->grad.assign(node->data.size(), 0.0);
            node->has_grad = true;
        }
    }
    loss.impl()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* node = *it;
        if (node->backward) node->backward(*node);
    }
}

}  // namespace gunet
