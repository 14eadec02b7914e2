#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "bdcn/data.hpp"
#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

// Size regimes as fractions of the image side.
constexpr double kLargeMin = 0.17;
constexpr double kLargeMax = 0.28;
constexpr double kSmallMin = 0.035;
constexpr double kSmallMax = 0.06;
constexpr double kGap = 3.0; // minimum pixels between bounding circles

// Large shapes are faint against the noise and only separable by pooling over
// a wide window; small shapes are crisp. This is what gives the two regimes a
// different best scale rather than just a different size.
constexpr double kLargeContrast = 0.2;
constexpr double kSmallContrast = 0.5;
constexpr double kNoise = 0.05;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

ShapeSpec random_shape(std::mt19937_64& rng, double radius, bool large) {
    ShapeSpec s;
    s.large = large;
    s.angle = uniform(rng, 0.0, std::numbers::pi);
    if (rng() % 2 == 0) {
        s.kind = ShapeKind::Ellipse;
        s.radius_y = radius;
        s.radius_x = radius * uniform(rng, 0.6, 1.0);
    } else {
        s.kind = ShapeKind::Polygon;
        s.radius_y = s.radius_x = radius;
        const int n = 3 + static_cast<int>(rng() % 4);
        // Evenly spread angles with jitter keep the polygon convex.
        const double step = 2.0 * std::numbers::pi / n;
        for (int i = 0; i < n; ++i) {
            const double a = s.angle + step * (i + uniform(rng, -0.2, 0.2));
            s.vertices.emplace_back(-radius * std::sin(a), radius * std::cos(a));
        }
    }
    return s;
}

} // namespace

bool ShapeSpec::contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    if (kind == ShapeKind::Ellipse) {
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = c * dx + s * dy;
        const double v = -s * dx + c * dy;
        return (u * u) / (radius_x * radius_x) + (v * v) / (radius_y * radius_y) <= 1.0;
    }
    // Convex polygon: inside when on the same side of every edge.
    bool pos = false;
    bool neg = false;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const auto [ay, ax] = vertices[i];
        const auto [by, bx] = vertices[(i + 1) % vertices.size()];
        const double cross = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax);
        if (cross > 0) pos = true;
        if (cross < 0) neg = true;
    }
    return !(pos && neg);
}

double ShapeSpec::bounding_radius() const { return std::max(radius_x, radius_y); }

Map2D rasterize(const ShapeSpec& shape, std::int64_t h, std::int64_t w) {
    Map2D m(h, w);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            if (shape.contains(static_cast<double>(y), static_cast<double>(x))) m(y, x) = 1.0f;
        }
    }
    return m;
}

Map2D inner_boundary(const Map2D& mask) {
    Map2D out(mask.height, mask.width);
    auto outside = [&mask](std::int64_t y, std::int64_t x) {
        return y < 0 || x < 0 || y >= mask.height || x >= mask.width || mask(y, x) == 0.0f;
    };
    for (std::int64_t y = 0; y < mask.height; ++y) {
        for (std::int64_t x = 0; x < mask.width; ++x) {
            if (mask(y, x) == 0.0f) continue;
            if (outside(y - 1, x) || outside(y + 1, x) || outside(y, x - 1) || outside(y, x + 1)) out(y, x) = 1.0f;
        }
    }
    return out;
}

std::vector<SynthSample> synth_shapes(std::uint64_t seed, int count, int size) {
    if (size < 32) throw ConfigError("synth_shapes: size must be >= 32");
    if (count < 0) throw ConfigError("synth_shapes: negative count");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, kNoise);
    const double side = size;
    std::vector<SynthSample> out;
    for (int i = 0; i < count; ++i) {
        SynthSample ss;
        const int n_large = 1 + static_cast<int>(rng() % 2);
        const int n_small = 4 + static_cast<int>(rng() % 4);
        for (int k = 0; k < n_large + n_small; ++k) {
            const bool large = k < n_large;
            const double radius = large ? uniform(rng, kLargeMin, kLargeMax) * side
                                        : uniform(rng, kSmallMin, kSmallMax) * side;
            for (int attempt = 0; attempt < 200; ++attempt) {
                ShapeSpec s = random_shape(rng, radius, large);
                const double margin = radius + 2.0;
                s.cy = uniform(rng, margin, side - 1 - margin);
                s.cx = uniform(rng, margin, side - 1 - margin);
                const bool clear = std::all_of(ss.shapes.begin(), ss.shapes.end(), [&](const ShapeSpec& o) {
                    return std::hypot(o.cy - s.cy, o.cx - s.cx) > o.bounding_radius() + s.bounding_radius() + kGap;
                });
                if (!clear) continue;
                ss.shapes.push_back(std::move(s));
                break;
            }
        }

        const std::int64_t h = size;
        const std::int64_t w = size;
        Map2D cover(h, w);
        std::vector<int> owner(static_cast<std::size_t>(h * w), -1);
        ss.gt_small = Map2D(h, w);
        ss.gt_large = Map2D(h, w);
        for (std::size_t k = 0; k < ss.shapes.size(); ++k) {
            const Map2D mask = rasterize(ss.shapes[k], h, w);
            const Map2D edge = inner_boundary(mask);
            Map2D& target = ss.shapes[k].large ? ss.gt_large : ss.gt_small;
            for (std::size_t p = 0; p < mask.values.size(); ++p) {
                if (mask.values[p] != 0.0f) owner[p] = static_cast<int>(k);
                if (edge.values[p] != 0.0f) target.values[p] = 1.0f;
            }
        }

        // Shading: bright background ramp, darker shape ramps, per-channel tint.
        const double bg = uniform(rng, 0.65, 0.85);
        const double bg_gy = uniform(rng, -0.1, 0.1);
        const double bg_gx = uniform(rng, -0.1, 0.1);
        std::vector<double> fill(ss.shapes.size());
        std::vector<double> fill_g(ss.shapes.size());
        for (std::size_t k = 0; k < ss.shapes.size(); ++k) {
            fill[k] = bg - (ss.shapes[k].large ? kLargeContrast : kSmallContrast) * uniform(rng, 0.8, 1.2);
            fill_g[k] = uniform(rng, -0.05, 0.05);
        }
        double tint[3];
        for (double& t : tint) t = uniform(rng, 0.9, 1.1);

        std::vector<float> img(static_cast<std::size_t>(3 * h * w));
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const double ny = static_cast<double>(y) / side - 0.5;
                const double nx = static_cast<double>(x) / side - 0.5;
                const int k = owner[static_cast<std::size_t>(y * w + x)];
                double v;
                if (k < 0) {
                    v = bg + bg_gy * ny + bg_gx * nx;
                } else {
                    const auto& s = ss.shapes[static_cast<std::size_t>(k)];
                    v = fill[static_cast<std::size_t>(k)] +
                        fill_g[static_cast<std::size_t>(k)] * (static_cast<double>(y) - s.cy) / s.bounding_radius();
                }
                for (int c = 0; c < 3; ++c) {
                    const double px = std::clamp(v * tint[c] + noise(rng), 0.0, 1.0);
                    img[static_cast<std::size_t>(c * h * w + y * w + x)] = static_cast<float>(px);
                }
            }
        }

        Map2D gt(h, w);
        for (std::size_t p = 0; p < gt.values.size(); ++p) {
            gt.values[p] = std::max(ss.gt_small.values[p], ss.gt_large.values[p]);
        }
        ss.sample.image = Tensor::from_data(Shape{1, 3, h, w}, std::move(img));
        ss.sample.gt = ConsensusGT{std::move(gt), 0.3};
        ss.sample.id = "synth_" + std::to_string(i);
        out.push_back(std::move(ss));
    }
    return out;
}

void write_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples) {
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "gt");
    std::vector<ManifestEntry> entries;
    for (const auto& ss : samples) {
        const Shape& s = ss.sample.image.shape();
        Image8 img;
        img.height = s.h;
        img.width = s.w;
        img.channels = 3;
        img.pixels.resize(static_cast<std::size_t>(3 * s.plane()));
        for (std::int64_t i = 0; i < s.plane(); ++i) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(static_cast<double>(ss.sample.image.data()[static_cast<std::size_t>(c * s.plane() + i)]), 0.0, 1.0);
                img.pixels[static_cast<std::size_t>(i * 3 + c)] = static_cast<std::uint8_t>(std::lround(255.0 * v));
            }
        }
        ManifestEntry e;
        e.id = ss.sample.id;
        e.image = dir / "images" / (ss.sample.id + ".png");
        e.gts.push_back(dir / "gt" / (ss.sample.id + ".png"));
        write_image(e.image, img);
        write_image(e.gts[0], to_image8(ss.sample.gt.values));
        entries.push_back(std::move(e));
    }
    write_manifest(dir / "manifest.tsv", entries);
}

} // namespace bdcn
