#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bdcn/loss.hpp"
#include "bdcn/map2d.hpp"
#include "bdcn/tensor.hpp"

namespace bdcn {

/// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
    std::int64_t height = 0;
    std::int64_t width = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
};

/// Reads PNG (.png) or binary PNM (.pgm/.ppm/.pnm). Alpha channels are
/// dropped; 16-bit PNGs are reduced to 8 bits. Throws IoError.
[[nodiscard]] Image8 read_image(const std::filesystem::path& path);
/// Format chosen by extension. Throws IoError.
void write_image(const std::filesystem::path& path, const Image8& img);

/// round(255 * clamp(v, 0, 1)) per pixel, single channel.
[[nodiscard]] Image8 to_image8(const Map2D& m);
[[nodiscard]] Map2D gray_to_map(const Image8& img);

/// (1, 3, H, W) in [0, 1]; gray rasters are replicated to three channels.
[[nodiscard]] Tensor image_to_tensor(const Image8& img);

struct Sample {
    Tensor image; // (1, 3, H, W), values in [0, 1]
    ConsensusGT gt;
    std::string id;
};

/// Image plus one or more annotator rasters. A single GT raster is rescaled
/// to [0, 1]; several are binarized (nonzero = edge) and averaged.
/// Throws IngestionError on dimension mismatch and IoError on unreadable files.
[[nodiscard]] Sample load_sample(const std::filesystem::path& image_path,
                                 std::span<const std::filesystem::path> gt_paths, double gamma = 0.3);

/// The consensus map alone, with the same single/multiple-annotator rules.
[[nodiscard]] Map2D load_consensus(std::span<const std::filesystem::path> gt_paths);

/// Mean of annotator maps.
[[nodiscard]] Map2D consensus(std::span<const Map2D> annotators);

struct ManifestEntry {
    std::string id; // image file stem
    std::filesystem::path image;
    std::vector<std::filesystem::path> gts;
};

/// Tab-separated: image path, then GT path or comma-separated annotator paths.
/// Relative paths resolve against the manifest's directory. Blank lines and
/// lines starting with '#' are skipped.
[[nodiscard]] std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

struct AugmentSpec {
    bool flip = false;
    std::vector<int> rotations{0};    // degrees, one drawn uniformly
    std::vector<double> scales{1.0};  // one drawn uniformly
    std::optional<std::pair<std::int64_t, std::int64_t>> crop; // (h, w)
    std::uint64_t seed = 0;

    /// flip on, rotations {0, 90, 180, 270}, scales {0.75, 1, 1.25}.
    static AugmentSpec training_default(std::uint64_t seed);
};

[[nodiscard]] Sample flip_horizontal(const Sample& s);
/// Counter-clockwise. Multiples of 90 degrees are exact pixel permutations
/// (height and width swap for odd quarter turns); other angles resample on the
/// same canvas with zero fill.
[[nodiscard]] Sample rotate(const Sample& s, int degrees);
/// Image bilinear, ground truth nearest-neighbour.
[[nodiscard]] Sample rescale(const Sample& s, double factor);
[[nodiscard]] Sample crop(const Sample& s, std::int64_t y, std::int64_t x, std::int64_t h, std::int64_t w);

/// Flip (coin toss when enabled), rotation, scale, then crop at a random
/// offset; all choices drawn from spec.seed. Throws ConfigError when the crop
/// does not fit.
[[nodiscard]] Sample augment(const Sample& s, const AugmentSpec& spec);

enum class ShapeKind { Ellipse, Polygon };

struct ShapeSpec {
    ShapeKind kind = ShapeKind::Ellipse;
    double cy = 0.0;
    double cx = 0.0;
    double radius_y = 1.0; // ellipse semi-axes; polygon circumradius in radius_y
    double radius_x = 1.0;
    double angle = 0.0;
    std::vector<std::pair<double, double>> vertices; // polygon (y, x) offsets from the centre
    bool large = false;

    /// Whether pixel centre (y, x) lies inside the shape.
    [[nodiscard]] bool contains(double y, double x) const;
    [[nodiscard]] double bounding_radius() const;
};

/// 1 where the shape covers the pixel centre.
[[nodiscard]] Map2D rasterize(const ShapeSpec& shape, std::int64_t h, std::int64_t w);
/// Covered pixels with at least one 4-neighbour outside the mask.
[[nodiscard]] Map2D inner_boundary(const Map2D& mask);

struct SynthSample {
    Sample sample;
    std::vector<ShapeSpec> shapes;
    Map2D gt_small; // boundaries of small-regime shapes only
    Map2D gt_large;
};

/// Darker shaded ellipses/convex polygons on a bright shaded background with
/// Gaussian noise. Shapes come from two size regimes (large and faint, small
/// and high-contrast) and never overlap; the
/// ground truth is the union of their 1-pixel inner boundaries. Deterministic
/// in `seed`. Throws ConfigError when size < 32.
[[nodiscard]] std::vector<SynthSample> synth_shapes(std::uint64_t seed, int count, int size);

/// Writes image PNGs, GT PNGs and a manifest into `dir`.
void write_dataset(const std::filesystem::path& dir, std::span<const SynthSample> samples);

} // namespace bdcn
