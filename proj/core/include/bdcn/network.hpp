#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bdcn/checkpoint.hpp"
#include "bdcn/map2d.hpp"
#include "bdcn/ops.hpp"
#include "bdcn/tensor.hpp"

namespace bdcn {

/// Architecture description. Everything needed to rebuild a network is here,
/// and it round-trips through checkpoint metadata.
struct BdcnConfig {
    int num_blocks = 5;       // ID Blocks, 2..5
    int sem_branches = 3;     // K; 0 turns every SEM into identity
    int dilation_factor = 4;  // r0
    int sem_mid_channels = 32;
    int head_channels = 21;
    std::vector<std::vector<int>> vgg_channel_plan = default_channel_plan();
    int input_channels = 3;
    std::uint64_t seed = 0;

    static std::vector<std::vector<int>> default_channel_plan();

    /// Throws ConfigError.
    void validate() const;
    [[nodiscard]] std::vector<int> rates() const;

    [[nodiscard]] std::vector<std::pair<std::string, std::string>> to_metadata() const;
    /// Missing keys keep their defaults; malformed values throw ConfigError.
    static BdcnConfig from_metadata(const std::vector<std::pair<std::string, std::string>>& kv);

    friend bool operator==(const BdcnConfig&, const BdcnConfig&) = default;
};

/// Dilation rates of a SEM: r_k = max(1, r0 * k), k = 1..K.
[[nodiscard]] std::vector<int> sem_rates(int branches, int dilation_factor);

/// Exact trainable-scalar count of the network `config` describes.
[[nodiscard]] std::int64_t param_count(const BdcnConfig& config);

struct ConvLayer {
    Tensor weight;
    Tensor bias;
    ConvSpec spec;

    [[nodiscard]] Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, spec); }
};

/// Scale Enhancement Module: 3x3 reduction to mid channels, then K parallel
/// dilated 3x3 branches whose ReLU outputs are summed. With K = 0 the module is
/// the identity.
struct SemModule {
    ConvLayer reduce;
    std::vector<ConvLayer> branches;

    [[nodiscard]] Tensor forward(const Tensor& feature) const;
    [[nodiscard]] bool identity() const { return branches.empty(); }
};

/// 1x1 (in -> head_channels) followed by 1x1 (head_channels -> 1), no nonlinearity.
struct ScoreHead {
    ConvLayer hidden;
    ConvLayer score;

    [[nodiscard]] Tensor forward(const Tensor& x) const { return score(hidden(x)); }
};

struct IdBlock {
    std::vector<ConvLayer> convs;
    std::vector<SemModule> sems; // one per conv
    ScoreHead s2d;
    ScoreHead d2s;
};

/// All maps are (n, 1, H, W) at input resolution, post-sigmoid.
struct BdcnOutputs {
    std::vector<Tensor> side_s2d;
    std::vector<Tensor> side_d2s;
    Tensor fused;

    [[nodiscard]] std::size_t num_blocks() const { return side_s2d.size(); }
    [[nodiscard]] std::size_t num_maps() const { return side_s2d.size() + side_d2s.size() + 1; }
};

struct LayerInfo {
    std::string name;
    Shape weight_shape;
    Shape output_shape;
    int dilation = 1;
    std::int64_t params = 0;
};

class Network {
public:
    /// Builds and initializes from config.seed. Throws ConfigError.
    explicit Network(BdcnConfig config);

    [[nodiscard]] const BdcnConfig& config() const { return config_; }
    [[nodiscard]] const std::vector<IdBlock>& blocks() const { return blocks_; }
    [[nodiscard]] const ConvLayer& fusion() const { return fusion_; }

    /// image: (n, input_channels, H, W) with H, W >= 2^(S-1).
    [[nodiscard]] BdcnOutputs forward(const Tensor& image) const;

    [[nodiscard]] std::vector<NamedTensor> named_parameters() const;
    [[nodiscard]] std::vector<Tensor> parameters() const;
    [[nodiscard]] std::int64_t num_parameters() const;

    [[nodiscard]] Checkpoint to_checkpoint() const;
    /// Rebuilds the architecture from metadata and copies parameters in.
    static Network from_checkpoint(const Checkpoint& ckpt);
    /// Copies parameter values from a checkpoint with identical names/shapes.
    void load_parameters(const Checkpoint& ckpt);

    /// Per-layer shapes for an input of the given size (no computation).
    [[nodiscard]] std::vector<LayerInfo> layer_table(std::int64_t h, std::int64_t w) const;
    /// Receptive-field extent (input pixels) seen by each block's score heads.
    [[nodiscard]] std::vector<std::int64_t> receptive_fields() const;

private:
    BdcnConfig config_;
    std::vector<IdBlock> blocks_;
    ConvLayer fusion_;
};

[[nodiscard]] inline Network build_network(const BdcnConfig& config) { return Network(config); }

/// Runs the network on resized copies of `image` (one per scale), resizes each
/// fused map back to the original size and averages. Scale 1 is never resampled.
[[nodiscard]] EdgeProbMap predict_multiscale(const Network& net, const Tensor& image,
                                             std::span<const double> scales);

/// Align-corners bilinear resize of every plane, no autograd. Works in both
/// directions; identity when the size is unchanged.
[[nodiscard]] Tensor resize_bilinear(const Tensor& input, std::int64_t h, std::int64_t w);

} // namespace bdcn
