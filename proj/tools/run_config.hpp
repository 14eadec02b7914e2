#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "bdcn/network.hpp"
#include "bdcn/trainer.hpp"

namespace bdcn::cli {

/// Everything a `train` run needs. Defaults reproduce the reference recipe.
struct RunConfig {
    BdcnConfig net;
    TrainSettings train;
    double gamma = 0.3;
    std::filesystem::path manifest;
    std::filesystem::path out_dir = "run";
    std::uint64_t seed = 0;
    int checkpoint_interval = 0; // 0: final checkpoint only

    /// Copies `seed` into the network and trainer settings.
    void apply_seed(std::uint64_t s);
};

/// INI-style file:
///
///   [net]    num_blocks, sem_branches, dilation_factor, sem_mid_channels,
///            head_channels, vgg_channel_plan (e.g. 64,64|128,128), input_channels
///   [optim]  lr, momentum, weight_decay, batch_size, iterations,
///            lr_decay_step, lr_decay_factor
///   [loss]   w_side, w_fuse, lambda, gamma
///   [data]   manifest, augment, crop (HxW)
///   [run]    out, seed, checkpoint_interval
///
/// Relative paths resolve against the file's directory. Unknown sections or
/// keys throw ConfigError so typos do not silently fall back to defaults.
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);
[[nodiscard]] RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
[[nodiscard]] std::string format_run_config(const RunConfig& cfg);

} // namespace bdcn::cli
