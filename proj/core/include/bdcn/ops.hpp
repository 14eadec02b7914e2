#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bdcn/tensor.hpp"

namespace bdcn {

/// Square-or-rectangular kernel convolution geometry. `dilation` is the
/// sampling stride inside the kernel footprint: an output at (i, j) reads
/// x[i*stride - pad + dilation*m, j*stride - pad + dilation*n].
struct ConvSpec {
    std::int64_t kernel_h = 3;
    std::int64_t kernel_w = 3;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t dilation = 1;

    /// Receptive extent of one output sample along each axis: r*(k-1)+1.
    [[nodiscard]] std::int64_t extent_h() const { return dilation * (kernel_h - 1) + 1; }
    [[nodiscard]] std::int64_t extent_w() const { return dilation * (kernel_w - 1) + 1; }

    /// floor((h + 2p - r(k-1) - 1) / stride) + 1. May be < 1 for invalid specs.
    [[nodiscard]] std::int64_t out_h(std::int64_t h) const;
    [[nodiscard]] std::int64_t out_w(std::int64_t w) const;

    /// "Same" padding for an odd kernel with this dilation and unit stride.
    static ConvSpec same(std::int64_t k, std::int64_t dilation = 1);
};

/// weight: (c_out, c_in, k_h, k_w); bias: (1, c_out, 1, 1) or undefined.
/// Throws ConfigError on shape mismatch or an empty output.
[[nodiscard]] Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                            const ConvSpec& spec);

/// 2x2, stride-2 max pooling. Odd trailing rows/columns are replicate-padded so
/// the output is ceil(h/2) x ceil(w/2). Ties route gradient to the first window
/// element in row-major order.
[[nodiscard]] Tensor maxpool2(const Tensor& input);

/// Align-corners bilinear resize to a size no smaller than the input.
[[nodiscard]] Tensor upsample_bilinear(const Tensor& input, std::int64_t target_h,
                                       std::int64_t target_w);

[[nodiscard]] Tensor relu(const Tensor& x);
[[nodiscard]] Tensor sigmoid(const Tensor& x);
[[nodiscard]] Tensor add(const Tensor& a, const Tensor& b);
[[nodiscard]] Tensor add_n(std::span<const Tensor> terms);
[[nodiscard]] Tensor scale(const Tensor& x, float factor);
/// Concatenate along the channel axis; all other dims must agree.
[[nodiscard]] Tensor concat_channels(std::span<const Tensor> parts);
/// Sum of all elements (accumulated in double) as a 1x1x1x1 tensor.
[[nodiscard]] Tensor sum(const Tensor& x);

/// Single (n, c) plane extracted as a (1, 1, h, w) tensor. Differentiable.
[[nodiscard]] Tensor select_plane(const Tensor& x, std::int64_t n, std::int64_t c);

/// While alive, records on this thread which side of its kink every
/// piecewise-linear op landed on: the sign of each ReLU input and each max-pool
/// argmax. Two evaluations with equal traces lie on the same linear piece, and
/// since that piece is convex, so does the whole segment between them.
class BranchTrace {
public:
    BranchTrace();
    ~BranchTrace();
    BranchTrace(const BranchTrace&) = delete;
    BranchTrace& operator=(const BranchTrace&) = delete;

    [[nodiscard]] const std::vector<std::int64_t>& entries() const { return entries_; }

private:
    std::vector<std::int64_t> entries_;
    std::vector<std::int64_t>* previous_;
};

} // namespace bdcn
