#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "bdcn/data.hpp"
#include "bdcn/errors.hpp"
#include "bdcn/network.hpp"

namespace bdcn {

namespace {

// Applies `src_of(y, x) -> optional source pixel` to every plane of the image
// and to the GT. Out-of-range sources become 0.
template <typename F>
Sample remap_exact(const Sample& s, std::int64_t oh, std::int64_t ow, F src_of) {
    const Shape& is = s.image.shape();
    Shape os{is.n, is.c, oh, ow};
    std::vector<float> img(static_cast<std::size_t>(os.numel()));
    Map2D gt(oh, ow);
    for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
            const auto [sy, sx] = src_of(y, x);
            for (std::int64_t pl = 0; pl < is.n * is.c; ++pl) {
                img[static_cast<std::size_t>(pl * oh * ow + y * ow + x)] =
                    s.image.data()[static_cast<std::size_t>(pl * is.plane() + sy * is.w + sx)];
            }
            gt(y, x) = s.gt.values(sy, sx);
        }
    }
    Sample out;
    out.image = Tensor::from_data(os, std::move(img));
    out.gt = ConsensusGT{std::move(gt), s.gt.gamma};
    out.id = s.id;
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

} // namespace

Tensor image_to_tensor(const Image8& img) {
    const std::int64_t plane = img.height * img.width;
    std::vector<float> data(static_cast<std::size_t>(3 * plane));
    for (std::int64_t c = 0; c < 3; ++c) {
        const int src_c = img.channels == 3 ? static_cast<int>(c) : 0;
        for (std::int64_t i = 0; i < plane; ++i) {
            data[static_cast<std::size_t>(c * plane + i)] =
                img.pixels[static_cast<std::size_t>(i * img.channels + src_c)] / 255.0f;
        }
    }
    return Tensor::from_data(Shape{1, 3, img.height, img.width}, std::move(data));
}

Map2D consensus(std::span<const Map2D> annotators) {
    if (annotators.empty()) throw IngestionError("no annotator maps");
    Map2D out(annotators[0].height, annotators[0].width);
    std::vector<double> acc(out.values.size(), 0.0);
    for (const auto& a : annotators) {
        if (!a.same_dims(out)) throw IngestionError("annotator maps differ in size");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += a.values[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out.values[i] = static_cast<float>(acc[i] / static_cast<double>(annotators.size()));
    }
    return out;
}

Map2D load_consensus(std::span<const std::filesystem::path> gt_paths) {
    if (gt_paths.empty()) throw IngestionError("no ground-truth file given");
    if (gt_paths.size() == 1) return gray_to_map(read_image(gt_paths[0]));
    std::vector<Map2D> maps;
    for (const auto& p : gt_paths) {
        Map2D m = gray_to_map(read_image(p));
        for (auto& v : m.values) v = v > 0.0f ? 1.0f : 0.0f;
        maps.push_back(std::move(m));
    }
    return consensus(maps);
}

Sample load_sample(const std::filesystem::path& image_path, std::span<const std::filesystem::path> gt_paths,
                   double gamma) {
    if (gt_paths.empty()) throw IngestionError("no ground-truth file for " + image_path.string());
    const Image8 img = read_image(image_path);
    Map2D gt = load_consensus(gt_paths);
    if (gt.height != img.height || gt.width != img.width) {
        throw IngestionError("ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                             " does not match image " + std::to_string(img.height) + "x" +
                             std::to_string(img.width) + " (" + image_path.string() + ")");
    }
    return Sample{image_to_tensor(img), ConsensusGT{std::move(gt), gamma}, image_path.stem().string()};
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&base](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, '\t');
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 'image<TAB>gt'");
        }
        ManifestEntry e;
        e.image = resolve(fields[0]);
        e.id = e.image.stem().string();
        for (const auto& g : split(fields[1], ',')) {
            if (!g.empty()) e.gts.push_back(resolve(g));
        }
        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const std::filesystem::path base = path.parent_path();
    auto rel = [&base](const std::filesystem::path& p) {
        if (base.empty()) return p.string();
        auto r = p.lexically_relative(base);
        return r.empty() ? p.string() : r.string();
    };
    for (const auto& e : entries) {
        out << rel(e.image) << '\t';
        for (std::size_t i = 0; i < e.gts.size(); ++i) out << (i ? "," : "") << rel(e.gts[i]);
        out << '\n';
    }
}

AugmentSpec AugmentSpec::training_default(std::uint64_t seed) {
    AugmentSpec s;
    s.flip = true;
    s.rotations = {0, 90, 180, 270};
    s.scales = {0.75, 1.0, 1.25};
    s.seed = seed;
    return s;
}

Sample flip_horizontal(const Sample& s) {
    const std::int64_t w = s.gt.values.width;
    return remap_exact(s, s.gt.values.height, w,
                       [w](std::int64_t y, std::int64_t x) { return std::pair{y, w - 1 - x}; });
}

Sample rotate(const Sample& s, int degrees) {
    const std::int64_t h = s.gt.values.height;
    const std::int64_t w = s.gt.values.width;
    const int d = ((degrees % 360) + 360) % 360;
    switch (d) {
    case 0: return remap_exact(s, h, w, [](std::int64_t y, std::int64_t x) { return std::pair{y, x}; });
    case 90:
        return remap_exact(s, w, h, [w](std::int64_t y, std::int64_t x) { return std::pair{x, w - 1 - y}; });
    case 180:
        return remap_exact(s, h, w,
                           [h, w](std::int64_t y, std::int64_t x) { return std::pair{h - 1 - y, w - 1 - x}; });
    case 270:
        return remap_exact(s, w, h, [h](std::int64_t y, std::int64_t x) { return std::pair{h - 1 - x, y}; });
    default: break;
    }
    // Free angle: inverse-map about the centre on the same canvas.
    const double th = static_cast<double>(d) * std::numbers::pi / 180.0;
    const double cy = (static_cast<double>(h) - 1) / 2;
    const double cx = (static_cast<double>(w) - 1) / 2;
    const double c = std::cos(th);
    const double sn = std::sin(th);
    const Shape& is = s.image.shape();
    std::vector<float> img(static_cast<std::size_t>(is.numel()), 0.0f);
    Map2D gt(h, w);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            // Counter-clockwise on screen (y down): source = R(+th) applied in (x, -y).
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double sx = cx + c * dx - sn * dy;
            const double sy = cy + sn * dx + c * dy;
            const auto ny = static_cast<std::int64_t>(std::lround(sy));
            const auto nx = static_cast<std::int64_t>(std::lround(sx));
            if (ny >= 0 && ny < h && nx >= 0 && nx < w) gt(y, x) = s.gt.values(ny, nx);
            if (sy < 0 || sy > static_cast<double>(h - 1) || sx < 0 || sx > static_cast<double>(w - 1)) continue;
            const auto y0 = static_cast<std::int64_t>(sy);
            const auto x0 = static_cast<std::int64_t>(sx);
            const std::int64_t y1 = std::min(y0 + 1, h - 1);
            const std::int64_t x1 = std::min(x0 + 1, w - 1);
            const double fy = sy - static_cast<double>(y0);
            const double fx = sx - static_cast<double>(x0);
            for (std::int64_t pl = 0; pl < is.n * is.c; ++pl) {
                const float* src = s.image.data().data() + pl * is.plane();
                const double v = (src[y0 * w + x0] * (1 - fx) + src[y0 * w + x1] * fx) * (1 - fy) +
                                 (src[y1 * w + x0] * (1 - fx) + src[y1 * w + x1] * fx) * fy;
                img[static_cast<std::size_t>(pl * is.plane() + y * w + x)] = static_cast<float>(v);
            }
        }
    }
    return Sample{Tensor::from_data(is, std::move(img)), ConsensusGT{std::move(gt), s.gt.gamma}, s.id};
}

Sample rescale(const Sample& s, double factor) {
    if (!(factor > 0.0)) throw ConfigError("rescale factor must be positive");
    const std::int64_t h = s.gt.values.height;
    const std::int64_t w = s.gt.values.width;
    const auto oh = std::max<std::int64_t>(1, std::llround(static_cast<double>(h) * factor));
    const auto ow = std::max<std::int64_t>(1, std::llround(static_cast<double>(w) * factor));
    if (oh == h && ow == w) return Sample{s.image.detach(), s.gt, s.id};
    auto nearest = [](std::int64_t i, std::int64_t in, std::int64_t out) -> std::int64_t {
        if (out == 1 || in == 1) return 0;
        return std::llround(static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1));
    };
    Map2D gt(oh, ow);
    for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) gt(y, x) = s.gt.values(nearest(y, h, oh), nearest(x, w, ow));
    }
    return Sample{resize_bilinear(s.image, oh, ow), ConsensusGT{std::move(gt), s.gt.gamma}, s.id};
}

Sample crop(const Sample& s, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1 || y < 0 || x < 0 || y + h > s.gt.values.height || x + w > s.gt.values.width) {
        throw ConfigError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(y) +
                          ", " + std::to_string(x) + ") does not fit in " + std::to_string(s.gt.values.height) +
                          "x" + std::to_string(s.gt.values.width));
    }
    return remap_exact(s, h, w, [y, x](std::int64_t yy, std::int64_t xx) { return std::pair{y + yy, x + xx}; });
}

Sample augment(const Sample& s, const AugmentSpec& spec) {
    if (spec.rotations.empty() || spec.scales.empty()) throw ConfigError("augment: empty rotation or scale set");
    std::mt19937_64 rng(spec.seed);
    const bool do_flip = spec.flip && (rng() & 1u);
    const int rot = spec.rotations[rng() % spec.rotations.size()];
    const double sc = spec.scales[rng() % spec.scales.size()];
    const std::uint64_t crop_y = rng();
    const std::uint64_t crop_x = rng();

    Sample out = do_flip ? flip_horizontal(s) : s;
    if (rot % 360 != 0) out = rotate(out, rot);
    if (sc != 1.0) out = rescale(out, sc);
    if (spec.crop) {
        const auto [ch, cw] = *spec.crop;
        const std::int64_t h = out.gt.values.height;
        const std::int64_t w = out.gt.values.width;
        if (ch > h || cw > w || ch < 1 || cw < 1) {
            throw ConfigError("augment: crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                              " larger than image " + std::to_string(h) + "x" + std::to_string(w));
        }
        out = crop(out, static_cast<std::int64_t>(crop_y % static_cast<std::uint64_t>(h - ch + 1)),
                   static_cast<std::int64_t>(crop_x % static_cast<std::uint64_t>(w - cw + 1)), ch, cw);
    }
    return out;
}

} // namespace bdcn
