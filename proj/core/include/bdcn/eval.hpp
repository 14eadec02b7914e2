#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bdcn/map2d.hpp"

namespace bdcn::eval {

inline constexpr double kBsdsTolerance = 0.0075;
inline constexpr double kNyudTolerance = 0.011;

/// Non-maximum suppression along the local edge normal.
///
/// The normal at each pixel is the dominant-curvature eigenvector of the
/// Hessian of a 5x5 triangle-smoothed copy of the map (central differences).
/// A pixel survives unless a bilinearly sampled neighbour one pixel away along
/// the normal exceeds 1.01x its value; survivors keep their probability.
[[nodiscard]] EdgeProbMap nms_thin(const EdgeProbMap& prob);

/// Pixels of `m` with value >= threshold set to 1, others 0.
[[nodiscard]] Map2D binarize(const Map2D& m, double threshold);

struct MatchCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    MatchCounts& operator+=(const MatchCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

/// Match radius in pixels: tolerance * image diagonal.
[[nodiscard]] double match_radius(std::int64_t height, std::int64_t width, double tolerance);

/// One-to-one correspondence between nonzero pixels of two masks within the
/// tolerance radius. Candidate pairs are first consumed greedily in ascending
/// distance (ties by the row-major positions of the pair's pixels, smaller
/// first); augmenting paths over the admissible pairs then add any matches the
/// greedy pass stranded, so tp is the maximum number of disjoint pairs and is
/// unchanged when the masks swap roles. Throws UsageError on size mismatch or
/// tolerance <= 0.
[[nodiscard]] MatchCounts match_edges(const Map2D& pred_binary, const Map2D& gt_binary, double tolerance);

/// 0.01, 0.02, ..., 0.99.
[[nodiscard]] std::vector<double> default_thresholds();

struct SweepResult {
    std::vector<double> thresholds;
    std::vector<std::vector<MatchCounts>> per_image; // [image][threshold]
};

/// Binarizes each (already thinned) map at prob >= t for every threshold and
/// matches against the ground-truth mask. Throws UsageError on an empty
/// dataset, mismatched list sizes, or thresholds outside (0, 1) / not ascending.
[[nodiscard]] SweepResult sweep_thresholds(std::span<const EdgeProbMap> probs, std::span<const Map2D> gt_masks,
                                           std::span<const double> thresholds, double tolerance);

struct PRPoint {
    double threshold = 0.0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    double precision = 1.0;
    double recall = 1.0;
    double f_measure = 0.0;
};

[[nodiscard]] PRPoint make_point(double threshold, const MatchCounts& c);

struct ImageBest {
    double threshold = 0.0;
    double f_measure = 0.0;
    MatchCounts counts;
};

struct EvalSummary {
    double ods_f = 0.0;
    double ods_threshold = 0.0;
    double ois_f = 0.0;
    double ap = 0.0;
    std::vector<PRPoint> curve; // one per threshold, dataset-aggregated
    std::vector<ImageBest> per_image;
};

/// ODS: best F over thresholds of dataset-summed counts. OIS: F of the counts
/// obtained by summing each image's best-threshold counts. AP: trapezoidal area
/// under the dataset PR curve over recall, extended flat to recall 0.
[[nodiscard]] EvalSummary summarize(const SweepResult& sweep);

/// Ground-truth edge mask from a consensus map: pixels with value >= 0.5.
[[nodiscard]] Map2D gt_mask(const Map2D& consensus);

/// NMS (optional), default threshold grid, sweep, summarize.
[[nodiscard]] EvalSummary evaluate(std::span<const EdgeProbMap> probs, std::span<const Map2D> gt_masks,
                                   double tolerance = kBsdsTolerance, bool thin = true);

/// CSV with header threshold,tp,fp,fn,precision,recall,f_measure.
[[nodiscard]] std::string pr_csv(const EvalSummary& s);
/// "ODS: 0.xxxx" / "OIS: ..." / "AP: ..." lines.
[[nodiscard]] std::string summary_text(const EvalSummary& s);
/// CSV with header id,best_threshold,best_f.
[[nodiscard]] std::string per_image_csv(const EvalSummary& s, std::span<const std::string> ids);

} // namespace bdcn::eval
