#include "bdcn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a combined key.
    std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void check_finite(double v, const std::string& term, int iteration) {
    if (!std::isfinite(v)) {
        throw TrainingError("non-finite loss in term '" + term + "' at iteration " + std::to_string(iteration));
    }
}

} // namespace

std::string format_log_line(const IterationLog& log) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d\t%.6g\t%.6g\t%.6g\t%.6g", log.iteration, log.total, log.side, log.fuse,
                  log.learning_rate);
    return buf;
}

double scheduled_lr(const TrainSettings& s, int iteration) {
    if (s.lr_decay_step <= 0) return s.sgd.learning_rate;
    return s.sgd.learning_rate * std::pow(s.lr_decay_factor, iteration / s.lr_decay_step);
}

Trainer::Trainer(Network& net, TrainSettings settings)
    : net_(net), settings_(std::move(settings)), optim_(net.parameters(), settings_.sgd) {
    if (settings_.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (settings_.iterations < 0) throw ConfigError("iterations must be >= 0");
}

std::vector<std::size_t> Trainer::next_batch(std::size_t dataset_size) {
    if (order_.size() != dataset_size) {
        order_.resize(dataset_size);
        cursor_ = dataset_size;
    }
    std::vector<std::size_t> batch;
    while (batch.size() < static_cast<std::size_t>(settings_.batch_size)) {
        if (cursor_ >= order_.size()) {
            std::iota(order_.begin(), order_.end(), std::size_t{0});
            std::mt19937_64 rng(mix(settings_.seed, epoch_++));
            // Fisher-Yates with raw engine output: identical on every standard library.
            for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng() % i]);
            cursor_ = 0;
        }
        batch.push_back(order_[cursor_++]);
    }
    return batch;
}

IterationLog Trainer::step(std::span<const Sample> dataset) {
    if (dataset.empty()) throw UsageError("training dataset is empty");
    const double lr = scheduled_lr(settings_, iteration_);
    optim_.set_learning_rate(lr);
    optim_.zero_grad();

    IterationLog log;
    log.iteration = iteration_;
    log.learning_rate = lr;
    const auto batch = next_batch(dataset.size());
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
        const Sample& base = dataset[batch[slot]];
        Sample sample = base;
        if (settings_.augment || settings_.crop) {
            AugmentSpec spec = settings_.augment ? AugmentSpec::training_default(0) : AugmentSpec{};
            spec.crop = settings_.crop;
            spec.seed = mix(mix(settings_.seed, static_cast<std::uint64_t>(iteration_)), slot);
            sample = augment(base, spec);
        }
        BdcnOutputs out = net_.forward(sample.image);
        const CascadeTargets targets = build_cascade_targets(sample.gt, out);
        LossBreakdown loss = total_loss(out, targets, sample.gt, settings_.loss);
        for (std::size_t s = 0; s < loss.side_s2d_terms.size(); ++s) {
            check_finite(loss.side_s2d_terms[s], "side s2d block " + std::to_string(s + 1), iteration_);
            check_finite(loss.side_d2s_terms[s], "side d2s block " + std::to_string(s + 1), iteration_);
        }
        check_finite(loss.fuse, "fuse", iteration_);
        loss.total.backward();
        log.total += loss.total.item();
        log.side += loss.side;
        log.fuse += loss.fuse;
    }
    optim_.step();
    ++iteration_;
    return log;
}

} // namespace bdcn
