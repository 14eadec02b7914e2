#pragma once

#include <cstdint>
#include <vector>

#include "bdcn/tensor.hpp"

namespace bdcn {

/// Single-channel row-major float raster. Used for edge probability maps,
/// consensus ground truth and binary edge masks (0/1).
struct Map2D {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::vector<float> values;

    Map2D() = default;
    Map2D(std::int64_t h, std::int64_t w, float fill = 0.0f)
        : height(h), width(w), values(static_cast<std::size_t>(h * w), fill) {}

    float& operator()(std::int64_t y, std::int64_t x) {
        return values[static_cast<std::size_t>(y * width + x)];
    }
    float operator()(std::int64_t y, std::int64_t x) const {
        return values[static_cast<std::size_t>(y * width + x)];
    }
    [[nodiscard]] std::int64_t size() const { return height * width; }
    [[nodiscard]] bool same_dims(const Map2D& o) const {
        return height == o.height && width == o.width;
    }

    friend bool operator==(const Map2D&, const Map2D&) = default;
};

using EdgeProbMap = Map2D;

/// (1, 1, h, w) tensor holding a copy of the map.
[[nodiscard]] Tensor to_tensor(const Map2D& m, bool requires_grad = false);
/// Copy of plane (n, c) of a tensor.
[[nodiscard]] Map2D plane_of(const Tensor& t, std::int64_t n = 0, std::int64_t c = 0);

} // namespace bdcn
