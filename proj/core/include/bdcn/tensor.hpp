#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bdcn {

/// (batch, channels, height, width). All components must be >= 1.
struct Shape {
    std::int64_t n = 1;
    std::int64_t c = 1;
    std::int64_t h = 1;
    std::int64_t w = 1;

    [[nodiscard]] std::int64_t numel() const { return n * c * h * w; }
    [[nodiscard]] std::int64_t plane() const { return h * w; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

class Tensor;

namespace detail {

struct TensorImpl;

/// Receives the output node (whose `grad` is populated) and must accumulate
/// into the gradients of the node's parents.
using BackwardFn = std::function<void(TensorImpl& out)>;

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad; // empty until a gradient is accumulated
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    BackwardFn backward_fn;

    /// Allocates (zero-filled) on first use.
    std::vector<float>& grad_buffer();
};

} // namespace detail

/// Dense rank-4 float tensor with reverse-mode autodiff.
///
/// Tensor is a cheap handle: copies share storage. Operations that take a
/// tensor requiring gradients record a node in the computation graph; the
/// graph lives as long as some downstream tensor refers to it.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    [[nodiscard]] bool defined() const { return impl_ != nullptr; }
    [[nodiscard]] const Shape& shape() const;
    [[nodiscard]] std::int64_t numel() const { return shape().numel(); }

    [[nodiscard]] std::span<float> data();
    [[nodiscard]] std::span<const float> data() const;
    /// Empty span when no gradient has been accumulated.
    [[nodiscard]] std::span<const float> grad() const;
    [[nodiscard]] std::span<float> mutable_grad();
    void zero_grad();

    [[nodiscard]] bool requires_grad() const;
    void set_requires_grad(bool on);

    /// Value of a single-element tensor.
    [[nodiscard]] float item() const;
    [[nodiscard]] float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

    /// Same storage contents, no history.
    [[nodiscard]] Tensor detach() const;
    [[nodiscard]] Tensor clone() const;

    /// Runs reverse-mode differentiation from this scalar. Every tensor in the
    /// recorded graph with requires_grad gets its gradient accumulated. Throws
    /// UsageError when the tensor has more than one element.
    void backward() const;

    // Graph construction hook for op implementations.
    static Tensor make_result(Shape shape, std::vector<float> data,
                              std::vector<Tensor> inputs, detail::BackwardFn fn);

    [[nodiscard]] const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Thread-local switch; while a NoGradGuard is alive ops do not record history.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

[[nodiscard]] bool grad_enabled();

} // namespace bdcn
