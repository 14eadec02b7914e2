#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bdcn/data.hpp"
#include "bdcn/loss.hpp"
#include "bdcn/network.hpp"
#include "bdcn/optim.hpp"

namespace bdcn {

struct TrainSettings {
    SgdSettings sgd;
    int batch_size = 10;
    int iterations = 40000;
    int lr_decay_step = 10000;
    double lr_decay_factor = 0.1;
    LossWeights loss;
    bool augment = true;
    std::optional<std::pair<std::int64_t, std::int64_t>> crop;
    std::uint64_t seed = 0;
};

struct IterationLog {
    int iteration = 0;
    double total = 0.0;
    double side = 0.0;
    double fuse = 0.0;
    double learning_rate = 0.0;
};

/// Tab-separated: iteration, total, side, fuse, learning rate.
[[nodiscard]] std::string format_log_line(const IterationLog& log);

/// lr * factor^(floor(iteration / step)).
[[nodiscard]] double scheduled_lr(const TrainSettings& s, int iteration);

/// Runs the cascade training loop: per iteration, draw a batch, augment,
/// forward, rebuild cascade targets from the current predictions, accumulate
/// the loss gradients over the batch, one SGD step.
///
/// Sample order and augmentation are a pure function of settings.seed, so two
/// runs with the same inputs produce bit-identical parameters.
class Trainer {
public:
    Trainer(Network& net, TrainSettings settings);

    /// Throws TrainingError naming the offending loss term on a non-finite value.
    IterationLog step(std::span<const Sample> dataset);

    [[nodiscard]] int iteration() const { return iteration_; }
    [[nodiscard]] const TrainSettings& settings() const { return settings_; }

private:
    std::vector<std::size_t> next_batch(std::size_t dataset_size);

    Network& net_;
    TrainSettings settings_;
    SgdMomentum optim_;
    int iteration_ = 0;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t epoch_ = 0;
};

} // namespace bdcn
