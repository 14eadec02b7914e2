#include "bdcn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Columns per GEMM tile. Products run in double on widened tiles so the
// reduction over k is accumulated in double without widening a whole im2col.
constexpr std::int64_t kTile = 2048;

using detail::TensorImpl;

bool wants_grad(const std::shared_ptr<TensorImpl>& p) { return p && p->requires_grad; }

thread_local std::vector<std::int64_t>* g_branch_trace = nullptr;

std::size_t idx(std::int64_t v) { return static_cast<std::size_t>(v); }

// Unfold one (c_in, h, w) image into a (c_in*kh*kw, oh*ow) matrix.
void im2col(const float* img, std::int64_t channels, std::int64_t h, std::int64_t w,
            const ConvSpec& s, std::int64_t oh, std::int64_t ow, float* col) {
    for (std::int64_t c = 0; c < channels; ++c) {
        const float* plane = img + c * h * w;
        for (std::int64_t m = 0; m < s.kernel_h; ++m) {
            for (std::int64_t n = 0; n < s.kernel_w; ++n) {
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = oy * s.stride - s.padding + s.dilation * m;
                    float* dst = col + oy * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, 0.0f);
                        continue;
                    }
                    const float* src = plane + iy * w;
                    const std::int64_t dx = s.dilation * n - s.padding;
                    if (s.stride == 1) {
                        // Valid ox range: 0 <= ox + dx < w.
                        const std::int64_t lo = std::clamp<std::int64_t>(-dx, 0, ow);
                        const std::int64_t hi = std::clamp<std::int64_t>(w - dx, lo, ow);
                        std::fill(dst, dst + lo, 0.0f);
                        std::copy(src + lo + dx, src + hi + dx, dst + lo);
                        std::fill(dst + hi, dst + ow, 0.0f);
                    } else {
                        for (std::int64_t ox = 0; ox < ow; ++ox) {
                            const std::int64_t ix = ox * s.stride + dx;
                            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                        }
                    }
                }
                col += oh * ow;
            }
        }
    }
}

void col2im(const float* col, std::int64_t channels, std::int64_t h, std::int64_t w,
            const ConvSpec& s, std::int64_t oh, std::int64_t ow, float* img) {
    for (std::int64_t c = 0; c < channels; ++c) {
        float* plane = img + c * h * w;
        for (std::int64_t m = 0; m < s.kernel_h; ++m) {
            for (std::int64_t n = 0; n < s.kernel_w; ++n) {
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = oy * s.stride - s.padding + s.dilation * m;
                    if (iy < 0 || iy >= h) continue;
                    const float* src = col + oy * ow;
                    float* dst = plane + iy * w;
                    const std::int64_t dx = s.dilation * n - s.padding;
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        const std::int64_t ix = ox * s.stride + dx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
                col += oh * ow;
            }
        }
    }
}

// out(c_out x p) = w(c_out x k) * col(k x p) + bias, accumulated in double.
void gemm_forward(const RowMatD& w, const float* col, std::int64_t p, const float* bias, float* out) {
    const std::int64_t k = w.cols();
    const std::int64_t c_out = w.rows();
    ConstMapMat cm(col, k, p);
    MapMat om(out, c_out, p);
    for (std::int64_t t = 0; t < p; t += kTile) {
        const std::int64_t n = std::min(kTile, p - t);
        RowMatD y = w * cm.middleCols(t, n).cast<double>();
        if (bias) {
            for (std::int64_t o = 0; o < c_out; ++o) y.row(o).array() += static_cast<double>(bias[idx(o)]);
        }
        om.middleCols(t, n) = y.cast<float>();
    }
}

// acc(c_out x k) += dy(c_out x p) * col(k x p)^T.
void gemm_weight_grad(const float* dy, const float* col, std::int64_t k, std::int64_t p, RowMatD& acc) {
    ConstMapMat dm(dy, acc.rows(), p);
    ConstMapMat cm(col, k, p);
    for (std::int64_t t = 0; t < p; t += kTile) {
        const std::int64_t n = std::min(kTile, p - t);
        acc.noalias() += dm.middleCols(t, n).cast<double>() * cm.middleCols(t, n).cast<double>().transpose();
    }
}

// out(k x p) (+)= w(c_out x k)^T * dy(c_out x p).
void gemm_input_grad(const RowMatD& w, const float* dy, std::int64_t p, float* out, bool accumulate) {
    ConstMapMat dm(dy, w.rows(), p);
    MapMat om(out, w.cols(), p);
    for (std::int64_t t = 0; t < p; t += kTile) {
        const std::int64_t n = std::min(kTile, p - t);
        RowMatD g = w.transpose() * dm.middleCols(t, n).cast<double>();
        if (accumulate) g += om.middleCols(t, n).cast<double>();
        om.middleCols(t, n) = g.cast<float>();
    }
}

bool is_pointwise(const ConvSpec& s) {
    return s.kernel_h == 1 && s.kernel_w == 1 && s.stride == 1 && s.padding == 0;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ConfigError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                          b.shape().str());
    }
}

} // namespace

std::int64_t ConvSpec::out_h(std::int64_t h) const {
    const std::int64_t num = h + 2 * padding - dilation * (kernel_h - 1) - 1;
    if (num < 0) return 0;
    return num / stride + 1;
}

std::int64_t ConvSpec::out_w(std::int64_t w) const {
    const std::int64_t num = w + 2 * padding - dilation * (kernel_w - 1) - 1;
    if (num < 0) return 0;
    return num / stride + 1;
}

ConvSpec ConvSpec::same(std::int64_t k, std::int64_t dilation) {
    return ConvSpec{k, k, 1, dilation * (k - 1) / 2, dilation};
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec) {
    if (spec.kernel_h < 1 || spec.kernel_w < 1 || spec.stride < 1 || spec.padding < 0 ||
        spec.dilation < 1) {
        throw ConfigError("conv2d: invalid ConvSpec");
    }
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    if (ws.h != spec.kernel_h || ws.w != spec.kernel_w) {
        throw ConfigError("conv2d: weight " + ws.str() + " does not match kernel size");
    }
    if (ws.c != xs.c) {
        throw ConfigError("conv2d: input has " + std::to_string(xs.c) +
                          " channels, weight expects " + std::to_string(ws.c));
    }
    if (bias.defined() && bias.numel() != ws.n) {
        throw ConfigError("conv2d: bias has " + std::to_string(bias.numel()) +
                          " elements, expected " + std::to_string(ws.n));
    }
    const std::int64_t oh = spec.out_h(xs.h);
    const std::int64_t ow = spec.out_w(xs.w);
    if (oh < 1 || ow < 1) {
        throw ConfigError("conv2d: output would be empty for input " + xs.str());
    }

    const std::int64_t c_out = ws.n;
    const std::int64_t k = ws.c * ws.h * ws.w;
    const std::int64_t p = oh * ow;
    const bool pointwise = is_pointwise(spec);

    Shape os{xs.n, c_out, oh, ow};
    std::vector<float> out(idx(os.numel()));
    std::vector<float> col(pointwise ? 0 : idx(k * p));
    const RowMatD wmat = ConstMapMat(weight.data().data(), c_out, k).cast<double>();
    const float* bp = bias.defined() ? bias.data().data() : nullptr;
    for (std::int64_t b = 0; b < xs.n; ++b) {
        const float* xb = input.data().data() + b * xs.c * xs.plane();
        const float* colp = xb;
        if (!pointwise) {
            im2col(xb, xs.c, xs.h, xs.w, spec, oh, ow, col.data());
            colp = col.data();
        }
        gemm_forward(wmat, colp, p, bp, out.data() + b * c_out * p);
    }

    return Tensor::make_result(
        os, std::move(out), {input, weight, bias},
        [spec, xs, ws, oh, ow, k, p, c_out, pointwise](TensorImpl& self) {
            auto& x = self.parents[0];
            auto& wt = self.parents[1];
            auto& bs = self.parents[2];
            const RowMatD wm = ConstMapMat(wt->data.data(), c_out, k).cast<double>();
            std::vector<float> col(pointwise ? 0 : idx(k * p));
            std::vector<float> dcol(pointwise ? 0 : idx(k * p));
            RowMatD dw_acc;
            if (wants_grad(wt)) dw_acc = RowMatD::Zero(c_out, k);
            for (std::int64_t b = 0; b < xs.n; ++b) {
                const float* dy = self.grad.data() + b * c_out * p;
                const float* xb = x->data.data() + b * xs.c * xs.plane();
                if (wants_grad(wt)) {
                    const float* colp = xb;
                    if (!pointwise) {
                        im2col(xb, xs.c, xs.h, xs.w, spec, oh, ow, col.data());
                        colp = col.data();
                    }
                    gemm_weight_grad(dy, colp, k, p, dw_acc);
                }
                if (wants_grad(bs)) {
                    auto& db = bs->grad_buffer();
                    for (std::int64_t o = 0; o < c_out; ++o) {
                        double acc = 0.0;
                        const float* row = dy + o * p;
                        for (std::int64_t i = 0; i < p; ++i) acc += row[i];
                        db[idx(o)] += static_cast<float>(acc);
                    }
                }
                if (wants_grad(x)) {
                    float* dxb = x->grad_buffer().data() + b * xs.c * xs.plane();
                    if (pointwise) {
                        gemm_input_grad(wm, dy, p, dxb, true);
                    } else {
                        gemm_input_grad(wm, dy, p, dcol.data(), false);
                        col2im(dcol.data(), xs.c, xs.h, xs.w, spec, oh, ow, dxb);
                    }
                }
            }
            if (wants_grad(wt)) {
                MapMat dw(wt->grad_buffer().data(), c_out, k);
                dw += dw_acc.cast<float>();
            }
        });
}

Tensor maxpool2(const Tensor& input) {
    const Shape& xs = input.shape();
    const std::int64_t oh = (xs.h + 1) / 2;
    const std::int64_t ow = (xs.w + 1) / 2;
    Shape os{xs.n, xs.c, oh, ow};
    std::vector<float> out(idx(os.numel()));
    std::vector<std::int64_t> argmax(idx(os.numel()));
    const float* x = input.data().data();
    for (std::int64_t pl = 0; pl < xs.n * xs.c; ++pl) {
        const float* src = x + pl * xs.plane();
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t y0 = 2 * oy;
            const std::int64_t y1 = std::min(y0 + 1, xs.h - 1);
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t x0 = 2 * ox;
                const std::int64_t x1 = std::min(x0 + 1, xs.w - 1);
                const std::int64_t cand[4] = {y0 * xs.w + x0, y0 * xs.w + x1, y1 * xs.w + x0,
                                              y1 * xs.w + x1};
                std::int64_t best = cand[0];
                for (int i = 1; i < 4; ++i) {
                    if (src[cand[i]] > src[best]) best = cand[i];
                }
                const std::size_t o = idx(pl * oh * ow + oy * ow + ox);
                if (g_branch_trace) g_branch_trace->push_back(best);
                out[o] = src[best];
                argmax[o] = pl * xs.plane() + best;
            }
        }
    }
    return Tensor::make_result(os, std::move(out), {input},
                               [argmax = std::move(argmax)](TensorImpl& self) {
                                   auto& dx = self.parents[0]->grad_buffer();
                                   for (std::size_t i = 0; i < argmax.size(); ++i) {
                                       dx[idx(argmax[i])] += self.grad[i];
                                   }
                               });
}

namespace {

struct LerpTap {
    std::int64_t lo;
    std::int64_t hi;
    float frac;
};

std::vector<LerpTap> align_corner_taps(std::int64_t in, std::int64_t out) {
    std::vector<LerpTap> taps(idx(out));
    for (std::int64_t i = 0; i < out; ++i) {
        if (in == 1 || out == 1) {
            taps[idx(i)] = {0, 0, 0.0f};
            continue;
        }
        const double src = static_cast<double>(i) * static_cast<double>(in - 1) /
                           static_cast<double>(out - 1);
        std::int64_t lo = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(src)), in - 1);
        std::int64_t hi = std::min<std::int64_t>(lo + 1, in - 1);
        taps[idx(i)] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
    }
    return taps;
}

} // namespace

Tensor upsample_bilinear(const Tensor& input, std::int64_t target_h, std::int64_t target_w) {
    const Shape& xs = input.shape();
    if (target_h < xs.h || target_w < xs.w) {
        throw ConfigError("upsample_bilinear: target " + std::to_string(target_h) + "x" +
                          std::to_string(target_w) + " smaller than input " + xs.str());
    }
    if (target_h == xs.h && target_w == xs.w) {
        return Tensor::make_result(xs, std::vector<float>(input.data().begin(), input.data().end()),
                                   {input}, [](TensorImpl& self) {
                                       auto& dx = self.parents[0]->grad_buffer();
                                       for (std::size_t i = 0; i < dx.size(); ++i)
                                           dx[i] += self.grad[i];
                                   });
    }
    auto ty = align_corner_taps(xs.h, target_h);
    auto tx = align_corner_taps(xs.w, target_w);
    Shape os{xs.n, xs.c, target_h, target_w};
    std::vector<float> out(idx(os.numel()));
    const float* x = input.data().data();
    for (std::int64_t pl = 0; pl < xs.n * xs.c; ++pl) {
        const float* src = x + pl * xs.plane();
        float* dst = out.data() + pl * os.plane();
        for (std::int64_t y = 0; y < target_h; ++y) {
            const auto& a = ty[idx(y)];
            for (std::int64_t xx = 0; xx < target_w; ++xx) {
                const auto& b = tx[idx(xx)];
                const float top = src[a.lo * xs.w + b.lo] * (1 - b.frac) + src[a.lo * xs.w + b.hi] * b.frac;
                const float bot = src[a.hi * xs.w + b.lo] * (1 - b.frac) + src[a.hi * xs.w + b.hi] * b.frac;
                dst[y * target_w + xx] = top * (1 - a.frac) + bot * a.frac;
            }
        }
    }
    return Tensor::make_result(
        os, std::move(out), {input},
        [xs, os, ty = std::move(ty), tx = std::move(tx)](TensorImpl& self) {
            auto& dx = self.parents[0]->grad_buffer();
            for (std::int64_t pl = 0; pl < xs.n * xs.c; ++pl) {
                float* dst = dx.data() + pl * xs.plane();
                const float* g = self.grad.data() + pl * os.plane();
                for (std::int64_t y = 0; y < os.h; ++y) {
                    const auto& a = ty[idx(y)];
                    for (std::int64_t xx = 0; xx < os.w; ++xx) {
                        const auto& b = tx[idx(xx)];
                        const float v = g[y * os.w + xx];
                        dst[a.lo * xs.w + b.lo] += v * (1 - a.frac) * (1 - b.frac);
                        dst[a.lo * xs.w + b.hi] += v * (1 - a.frac) * b.frac;
                        dst[a.hi * xs.w + b.lo] += v * a.frac * (1 - b.frac);
                        dst[a.hi * xs.w + b.hi] += v * a.frac * b.frac;
                    }
                }
            }
        });
}

Tensor relu(const Tensor& x) {
    std::vector<float> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0.0f ? v : 0.0f;
    if (g_branch_trace) {
        for (float v : out) g_branch_trace->push_back(v > 0.0f);
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
        auto& in = self.parents[0];
        auto& dx = in->grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (in->data[i] > 0.0f) dx[i] += self.grad[i];
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<float> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](TensorImpl& self) {
        auto& dx = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) {
            const float s = self.data[i];
            dx[i] += self.grad[i] * s * (1.0f - s);
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const Tensor terms[2] = {a, b};
    return add_n(terms);
}

Tensor add_n(std::span<const Tensor> terms) {
    if (terms.empty()) throw UsageError("add_n: no terms");
    for (const auto& t : terms) require_same_shape(terms[0], t, "add_n");
    std::vector<float> out(terms[0].data().begin(), terms[0].data().end());
    for (std::size_t t = 1; t < terms.size(); ++t) {
        auto d = terms[t].data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    }
    return Tensor::make_result(terms[0].shape(), std::move(out),
                               std::vector<Tensor>(terms.begin(), terms.end()),
                               [](TensorImpl& self) {
                                   for (auto& p : self.parents) {
                                       if (!wants_grad(p)) continue;
                                       auto& dx = p->grad_buffer();
                                       for (std::size_t i = 0; i < dx.size(); ++i)
                                           dx[i] += self.grad[i];
                                   }
                               });
}

Tensor scale(const Tensor& x, float factor) {
    std::vector<float> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](TensorImpl& self) {
        auto& dx = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * self.grad[i];
    });
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw UsageError("concat_channels: no inputs");
    const Shape& s0 = parts[0].shape();
    std::int64_t channels = 0;
    for (const auto& t : parts) {
        const Shape& s = t.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
            throw ConfigError("concat_channels: incompatible shapes " + s0.str() + " and " + s.str());
        }
        channels += s.c;
    }
    Shape os{s0.n, channels, s0.h, s0.w};
    std::vector<float> out(idx(os.numel()));
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& t : parts) {
        offsets.push_back(off);
        const Shape& s = t.shape();
        for (std::int64_t b = 0; b < s.n; ++b) {
            auto src = t.data().subspan(idx(b * s.c * s.plane()), idx(s.c * s.plane()));
            std::copy(src.begin(), src.end(), out.begin() + (b * channels + off) * os.plane());
        }
        off += s.c;
    }
    return Tensor::make_result(os, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                               [os, offsets = std::move(offsets)](TensorImpl& self) {
                                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                       auto& p = self.parents[k];
                                       if (!wants_grad(p)) continue;
                                       auto& dx = p->grad_buffer();
                                       const Shape& s = p->shape;
                                       for (std::int64_t b = 0; b < s.n; ++b) {
                                           const float* g = self.grad.data() +
                                                            (b * os.c + offsets[k]) * os.plane();
                                           float* d = dx.data() + b * s.c * s.plane();
                                           for (std::int64_t i = 0; i < s.c * s.plane(); ++i)
                                               d[i] += g[i];
                                       }
                                   }
                               });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    return Tensor::make_result(Shape{1, 1, 1, 1}, {static_cast<float>(acc)}, {x},
                               [](TensorImpl& self) {
                                   auto& dx = self.parents[0]->grad_buffer();
                                   for (auto& v : dx) v += self.grad[0];
                               });
}

Tensor select_plane(const Tensor& x, std::int64_t n, std::int64_t c) {
    const Shape& s = x.shape();
    if (n < 0 || n >= s.n || c < 0 || c >= s.c) {
        throw UsageError("select_plane: index out of range for " + s.str());
    }
    const std::int64_t offset = (n * s.c + c) * s.plane();
    auto src = x.data().subspan(idx(offset), idx(s.plane()));
    return Tensor::make_result(Shape{1, 1, s.h, s.w}, std::vector<float>(src.begin(), src.end()),
                               {x}, [offset](TensorImpl& self) {
                                   auto& dx = self.parents[0]->grad_buffer();
                                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                                       dx[idx(offset) + i] += self.grad[i];
                               });
}

BranchTrace::BranchTrace() : previous_(g_branch_trace) { g_branch_trace = &entries_; }

BranchTrace::~BranchTrace() { g_branch_trace = previous_; }

} // namespace bdcn
