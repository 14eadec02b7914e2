#include "bdcn/map2d.hpp"

namespace bdcn {

Tensor to_tensor(const Map2D& m, bool requires_grad) {
    return Tensor::from_data(Shape{1, 1, m.height, m.width}, m.values, requires_grad);
}

Map2D plane_of(const Tensor& t, std::int64_t n, std::int64_t c) {
    const Shape& s = t.shape();
    Map2D m(s.h, s.w);
    auto src = t.data().subspan(static_cast<std::size_t>((n * s.c + c) * s.plane()),
                                static_cast<std::size_t>(s.plane()));
    m.values.assign(src.begin(), src.end());
    return m;
}

} // namespace bdcn
