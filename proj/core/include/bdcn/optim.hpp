#pragma once

#include <vector>

#include "bdcn/tensor.hpp"

namespace bdcn {

struct SgdSettings {
    double learning_rate = 1e-6;
    double momentum = 0.9;
    double weight_decay = 2e-4;
};

/// SGD with heavy-ball momentum and coupled L2 decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// One velocity buffer per parameter, shaped like the parameter.
class SgdMomentum {
public:
    SgdMomentum(std::vector<Tensor> params, SgdSettings settings);

    /// Applies one update using the gradients currently stored on the
    /// parameters (missing gradients count as zero). Throws TrainingError if any
    /// gradient is non-finite; in that case no parameter is modified.
    void step();
    void zero_grad();

    void set_learning_rate(double lr) { settings_.learning_rate = lr; }
    [[nodiscard]] const SgdSettings& settings() const { return settings_; }
    [[nodiscard]] const std::vector<std::vector<float>>& velocities() const { return velocity_; }
    [[nodiscard]] std::vector<std::vector<float>>& velocities() { return velocity_; }

private:
    std::vector<Tensor> params_;
    SgdSettings settings_;
    std::vector<std::vector<float>> velocity_;
};

} // namespace bdcn
