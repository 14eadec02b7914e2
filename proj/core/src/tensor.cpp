#include "bdcn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw ConfigError("tensor shape components must be >= 1, got " + s.str());
    }
}

} // namespace

std::string Shape::str() const {
    std::ostringstream os;
    os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
    return os.str();
}

std::vector<float>& detail::TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(shape, 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    check_shape(shape);
    return from_data(shape, std::vector<float>(static_cast<std::size_t>(shape.numel()), value),
                     requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
    check_shape(shape);
    if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
        throw ConfigError("data length " + std::to_string(data.size()) +
                          " does not match shape " + shape.str());
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = shape;
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data(Shape{1, 1, 1, 1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::span<float> Tensor::data() { return impl_->data; }
std::span<const float> Tensor::data() const { return impl_->data; }
std::span<const float> Tensor::grad() const { return impl_->grad; }
std::span<float> Tensor::mutable_grad() { return impl_->grad_buffer(); }

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }

float Tensor::item() const {
    if (numel() != 1) throw UsageError("item() on tensor of shape " + shape().str());
    return impl_->data[0];
}

float Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    const Shape& s = shape();
    return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

Tensor Tensor::detach() const { return from_data(shape(), impl_->data, false); }

Tensor Tensor::clone() const { return from_data(shape(), impl_->data, requires_grad()); }

Tensor Tensor::make_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs,
                           detail::BackwardFn fn) {
    Tensor out = from_data(shape, std::move(data), false);
    if (!g_grad_enabled) return out;
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (!any) return out;
    out.impl_->requires_grad = true;
    out.impl_->backward_fn = std::move(fn);
    out.impl_->parents.reserve(inputs.size());
    for (auto& t : inputs) out.impl_->parents.push_back(t.impl_);
    return out;
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw UsageError("backward() requires a scalar, got shape " + shape().str());
    }
    if (!requires_grad()) return;

    // Iterative post-order DFS gives a topological order (inputs before outputs).
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> visited;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::TensorImpl* p = node->parents[next++].get();
            if (p && p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    impl_->grad_buffer()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* node = *it;
        if (!node->backward_fn || node->grad.empty()) continue;
        node->backward_fn(*node);
        // Interior gradients are not needed once propagated.
        if (node != impl_.get()) {
            node->grad.clear();
            node->grad.shrink_to_fit();
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

} // namespace bdcn
