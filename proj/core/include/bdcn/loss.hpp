#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bdcn/map2d.hpp"
#include "bdcn/network.hpp"
#include "bdcn/tensor.hpp"

namespace bdcn {

/// Averaged annotator map Y with the loss threshold gamma.
/// Positives: y > gamma. Negatives: y == 0. Everything else is ignored.
struct ConsensusGT {
    Map2D values;
    double gamma = 0.3;
};

enum class PixelClass : std::uint8_t { Negative = 0, Positive = 1, Excluded = 2 };

/// Supervision for one prediction head: the (clamped) target map plus the
/// per-pixel class used by the balanced cross-entropy.
struct LayerTarget {
    Map2D target;
    std::vector<PixelClass> labels;
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
};

struct CascadeTargets {
    std::vector<LayerTarget> s2d; // index s-1 supervises block s
    std::vector<LayerTarget> d2s;
};

/// Labels a target map. A pixel is positive when target > gamma, negative when
/// the raw annotation is 0, excluded otherwise.
[[nodiscard]] LayerTarget label_target(Map2D target, const ConsensusGT& gt);

/// Y itself, labelled by the gamma band.
[[nodiscard]] LayerTarget raw_target(const ConsensusGT& gt);

/// Y_s^{s2d} = clamp(Y - sum_{i<s} P_i^{s2d}, 0, 1) and
/// Y_s^{d2s} = clamp(Y - sum_{i>s} P_i^{d2s}, 0, 1), reading the prediction
/// values only (no gradient path). Outputs must have batch size 1.
[[nodiscard]] CascadeTargets build_cascade_targets(const ConsensusGT& gt, const BdcnOutputs& outputs);

struct BalanceWeights {
    double alpha = 0.0; // weight on negatives: lambda * |Y+| / (|Y+| + |Y-|)
    double beta = 0.0;  // weight on positives: |Y-| / (|Y+| + |Y-|)
};

[[nodiscard]] BalanceWeights balance_weights(std::int64_t positives, std::int64_t negatives, double lambda);

inline constexpr double kProbEpsilon = 1e-7;

/// -alpha * sum_{Y-} log(1 - p) - beta * sum_{Y+} log(p), p clamped to
/// [eps, 1 - eps]. Excluded pixels contribute nothing. `pred` is (1, 1, H, W).
[[nodiscard]] Tensor balanced_bce(const Tensor& pred, const LayerTarget& target, double lambda);

struct LossWeights {
    double w_side = 0.5;
    double w_fuse = 1.1;
    double lambda = 1.1;
};

struct LossBreakdown {
    Tensor total;
    double side = 0.0; // unweighted sum of the 2S side terms
    double fuse = 0.0; // unweighted fused term
    int terms = 0;     // number of balanced_bce evaluations
    std::vector<double> side_s2d_terms;
    std::vector<double> side_d2s_terms;
};

/// w_side * sum_s [L(P_s^d2s, Y_s^d2s) + L(P_s^s2d, Y_s^s2d)] + w_fuse * L(P, Y).
[[nodiscard]] LossBreakdown total_loss(const BdcnOutputs& outputs, const CascadeTargets& targets,
                                       const ConsensusGT& gt, const LossWeights& weights);

/// The rejected formulation: one loss on the plain sum of all predictions.
/// Kept to exhibit that it gives every P_i the same gradient.
[[nodiscard]] Tensor naive_summed_loss(std::span<const Tensor> predictions, const ConsensusGT& gt,
                                       double lambda);

} // namespace bdcn
