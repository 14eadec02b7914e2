#include "bdcn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

void require_single(const Tensor& t, const Map2D& gt, const char* what) {
    const Shape& s = t.shape();
    if (s.n != 1 || s.c != 1 || s.h != gt.height || s.w != gt.width) {
        throw UsageError(std::string(what) + ": prediction " + s.str() + " does not match ground truth " +
                         std::to_string(gt.height) + "x" + std::to_string(gt.width));
    }
}

} // namespace

LayerTarget label_target(Map2D target, const ConsensusGT& gt) {
    if (!target.same_dims(gt.values)) throw UsageError("label_target: dimension mismatch");
    LayerTarget out;
    out.labels.resize(target.values.size(), PixelClass::Excluded);
    // Compared in float so a consensus of exactly gamma (e.g. 3 of 10) is not positive.
    const float gamma = static_cast<float>(gt.gamma);
    for (std::size_t i = 0; i < target.values.size(); ++i) {
        if (target.values[i] > gamma) {
            out.labels[i] = PixelClass::Positive;
            ++out.positives;
        } else if (gt.values.values[i] == 0.0f) {
            out.labels[i] = PixelClass::Negative;
            ++out.negatives;
        }
    }
    out.target = std::move(target);
    return out;
}

LayerTarget raw_target(const ConsensusGT& gt) { return label_target(gt.values, gt); }

CascadeTargets build_cascade_targets(const ConsensusGT& gt, const BdcnOutputs& outputs) {
    const std::size_t blocks = outputs.num_blocks();
    if (outputs.side_d2s.size() != blocks) throw UsageError("build_cascade_targets: unequal side lists");
    for (std::size_t s = 0; s < blocks; ++s) {
        require_single(outputs.side_s2d[s], gt.values, "build_cascade_targets");
        require_single(outputs.side_d2s[s], gt.values, "build_cascade_targets");
    }
    const std::size_t n = gt.values.values.size();
    const auto& y = gt.values.values;

    auto residual = [&](const std::vector<double>& propagated) {
        Map2D t(gt.values.height, gt.values.width);
        for (std::size_t i = 0; i < n; ++i) {
            t.values[i] = static_cast<float>(std::clamp(static_cast<double>(y[i]) - propagated[i], 0.0, 1.0));
        }
        return label_target(std::move(t), gt);
    };

    CascadeTargets out;
    out.s2d.resize(blocks);
    out.d2s.resize(blocks);
    std::vector<double> acc(n, 0.0);
    for (std::size_t s = 0; s < blocks; ++s) {
        out.s2d[s] = residual(acc);
        auto p = outputs.side_s2d[s].data();
        for (std::size_t i = 0; i < n; ++i) acc[i] += p[i];
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t s = blocks; s-- > 0;) {
        out.d2s[s] = residual(acc);
        auto p = outputs.side_d2s[s].data();
        for (std::size_t i = 0; i < n; ++i) acc[i] += p[i];
    }
    return out;
}

BalanceWeights balance_weights(std::int64_t positives, std::int64_t negatives, double lambda) {
    const double total = static_cast<double>(positives + negatives);
    if (total <= 0.0) return {};
    return {lambda * static_cast<double>(positives) / total, static_cast<double>(negatives) / total};
}

Tensor balanced_bce(const Tensor& pred, const LayerTarget& target, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("balanced_bce: lambda must be positive");
    require_single(pred, target.target, "balanced_bce");
    const BalanceWeights bw = balance_weights(target.positives, target.negatives, lambda);
    auto p = pred.data();
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(static_cast<double>(p[i]), kProbEpsilon, 1.0 - kProbEpsilon);
        switch (target.labels[i]) {
        case PixelClass::Negative: loss -= bw.alpha * std::log(1.0 - pc); break;
        case PixelClass::Positive: loss -= bw.beta * std::log(pc); break;
        case PixelClass::Excluded: break;
        }
    }
    return Tensor::make_result(
        Shape{1, 1, 1, 1}, {static_cast<float>(loss)}, {pred},
        [labels = target.labels, bw](detail::TensorImpl& self) {
            auto& in = self.parents[0];
            auto& dx = in->grad_buffer();
            const double g = self.grad[0];
            for (std::size_t i = 0; i < dx.size(); ++i) {
                const double pc = std::clamp(static_cast<double>(in->data[i]), kProbEpsilon, 1.0 - kProbEpsilon);
                switch (labels[i]) {
                case PixelClass::Negative: dx[i] += static_cast<float>(g * bw.alpha / (1.0 - pc)); break;
                case PixelClass::Positive: dx[i] -= static_cast<float>(g * bw.beta / pc); break;
                case PixelClass::Excluded: break;
                }
            }
        });
}

LossBreakdown total_loss(const BdcnOutputs& outputs, const CascadeTargets& targets, const ConsensusGT& gt,
                         const LossWeights& weights) {
    if (weights.w_side < 0.0 || weights.w_fuse < 0.0) throw ConfigError("loss weights must be >= 0");
    const std::size_t blocks = outputs.num_blocks();
    if (targets.s2d.size() != blocks || targets.d2s.size() != blocks) {
        throw UsageError("total_loss: targets do not match the number of blocks");
    }
    LossBreakdown out;
    std::vector<Tensor> side_terms;
    for (std::size_t s = 0; s < blocks; ++s) {
        Tensor d = balanced_bce(outputs.side_d2s[s], targets.d2s[s], weights.lambda);
        Tensor a = balanced_bce(outputs.side_s2d[s], targets.s2d[s], weights.lambda);
        out.side_d2s_terms.push_back(d.item());
        out.side_s2d_terms.push_back(a.item());
        out.side += static_cast<double>(d.item()) + static_cast<double>(a.item());
        side_terms.push_back(std::move(d));
        side_terms.push_back(std::move(a));
    }
    Tensor fuse = balanced_bce(outputs.fused, raw_target(gt), weights.lambda);
    out.fuse = fuse.item();
    out.terms = static_cast<int>(side_terms.size()) + 1;
    out.total = add(scale(add_n(side_terms), static_cast<float>(weights.w_side)),
                    scale(fuse, static_cast<float>(weights.w_fuse)));
    return out;
}

Tensor naive_summed_loss(std::span<const Tensor> predictions, const ConsensusGT& gt, double lambda) {
    if (predictions.empty()) throw UsageError("naive_summed_loss: no predictions");
    Tensor combined = predictions.size() == 1 ? predictions[0] : add_n(predictions);
    return balanced_bce(combined, raw_target(gt), lambda);
}

} // namespace bdcn
