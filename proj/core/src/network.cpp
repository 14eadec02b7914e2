#include "bdcn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

std::string join_plan(const std::vector<std::vector<int>>& plan) {
    std::ostringstream os;
    for (std::size_t b = 0; b < plan.size(); ++b) {
        if (b) os << '|';
        for (std::size_t i = 0; i < plan[b].size(); ++i) {
            if (i) os << ',';
            os << plan[b][i];
        }
    }
    return os.str();
}

std::vector<std::vector<int>> parse_plan(const std::string& s) {
    std::vector<std::vector<int>> plan;
    std::stringstream blocks(s);
    std::string block;
    while (std::getline(blocks, block, '|')) {
        std::vector<int> widths;
        std::stringstream items(block);
        std::string item;
        while (std::getline(items, item, ',')) {
            try {
                widths.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw ConfigError("malformed channel plan '" + s + "'");
            }
        }
        plan.push_back(std::move(widths));
    }
    return plan;
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

std::int64_t conv_params(std::int64_t cin, std::int64_t cout, std::int64_t k) {
    return cin * cout * k * k + cout;
}

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    // He-normal weights, zero bias.
    ConvLayer he(std::int64_t cin, std::int64_t cout, const ConvSpec& spec) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(cin * spec.kernel_h * spec.kernel_w));
        std::normal_distribution<double> dist(0.0, stddev);
        Shape ws{cout, cin, spec.kernel_h, spec.kernel_w};
        std::vector<float> w(static_cast<std::size_t>(ws.numel()));
        for (auto& v : w) v = static_cast<float>(dist(rng_));
        return {Tensor::from_data(ws, std::move(w), true), Tensor::zeros(Shape{1, cout, 1, 1}, true), spec};
    }

    static ConvLayer constant(std::int64_t cin, std::int64_t cout, const ConvSpec& spec, float value) {
        return {Tensor::full(Shape{cout, cin, spec.kernel_h, spec.kernel_w}, value, true),
                Tensor::zeros(Shape{1, cout, 1, 1}, true), spec};
    }

private:
    std::mt19937_64 rng_;
};

void push(std::vector<NamedTensor>& out, const std::string& prefix, const ConvLayer& l) {
    out.push_back({prefix + ".weight", l.weight});
    out.push_back({prefix + ".bias", l.bias});
}

} // namespace

std::vector<std::vector<int>> BdcnConfig::default_channel_plan() {
    return {{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
}

void BdcnConfig::validate() const {
    if (num_blocks < 2 || num_blocks > 5) {
        throw ConfigError("num_blocks must be in [2, 5], got " + std::to_string(num_blocks));
    }
    if (sem_branches < 0) throw ConfigError("sem_branches must be >= 0");
    if (dilation_factor < 0) throw ConfigError("dilation_factor must be >= 0");
    if (sem_mid_channels < 1) throw ConfigError("sem_mid_channels must be >= 1");
    if (head_channels < 1) throw ConfigError("head_channels must be >= 1");
    if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
    if (static_cast<int>(vgg_channel_plan.size()) < num_blocks) {
        throw ConfigError("channel plan has fewer blocks than num_blocks");
    }
    for (int b = 0; b < num_blocks; ++b) {
        if (vgg_channel_plan[static_cast<std::size_t>(b)].empty()) throw ConfigError("empty block in channel plan");
        for (int c : vgg_channel_plan[static_cast<std::size_t>(b)]) {
            if (c < 1) throw ConfigError("channel widths must be >= 1");
        }
    }
}

std::vector<int> BdcnConfig::rates() const { return sem_rates(sem_branches, dilation_factor); }

std::vector<std::pair<std::string, std::string>> BdcnConfig::to_metadata() const {
    return {
        {"net.num_blocks", std::to_string(num_blocks)},
        {"net.sem_branches", std::to_string(sem_branches)},
        {"net.dilation_factor", std::to_string(dilation_factor)},
        {"net.sem_mid_channels", std::to_string(sem_mid_channels)},
        {"net.head_channels", std::to_string(head_channels)},
        {"net.vgg_channel_plan", join_plan(vgg_channel_plan)},
        {"net.input_channels", std::to_string(input_channels)},
        {"net.seed", std::to_string(seed)},
    };
}

BdcnConfig BdcnConfig::from_metadata(const std::vector<std::pair<std::string, std::string>>& kv) {
    BdcnConfig c;
    for (const auto& [k, v] : kv) {
        if (k == "net.num_blocks") c.num_blocks = static_cast<int>(parse_int(k, v));
        else if (k == "net.sem_branches") c.sem_branches = static_cast<int>(parse_int(k, v));
        else if (k == "net.dilation_factor") c.dilation_factor = static_cast<int>(parse_int(k, v));
        else if (k == "net.sem_mid_channels") c.sem_mid_channels = static_cast<int>(parse_int(k, v));
        else if (k == "net.head_channels") c.head_channels = static_cast<int>(parse_int(k, v));
        else if (k == "net.vgg_channel_plan") c.vgg_channel_plan = parse_plan(v);
        else if (k == "net.input_channels") c.input_channels = static_cast<int>(parse_int(k, v));
        else if (k == "net.seed") c.seed = static_cast<std::uint64_t>(parse_int(k, v));
    }
    c.validate();
    return c;
}

std::vector<int> sem_rates(int branches, int dilation_factor) {
    std::vector<int> r;
    for (int k = 1; k <= branches; ++k) r.push_back(std::max(1, dilation_factor * k));
    return r;
}

std::int64_t param_count(const BdcnConfig& config) {
    config.validate();
    std::int64_t total = 0;
    std::int64_t c = config.input_channels;
    const std::int64_t mid = config.sem_mid_channels;
    const std::int64_t k = config.sem_branches;
    for (int b = 0; b < config.num_blocks; ++b) {
        for (int width : config.vgg_channel_plan[static_cast<std::size_t>(b)]) {
            total += conv_params(c, width, 3);
            c = width;
            if (k > 0) total += conv_params(width, mid, 3) + k * conv_params(mid, mid, 3);
        }
        const std::int64_t head_in = k > 0 ? mid : c;
        total += 2 * (conv_params(head_in, config.head_channels, 1) + conv_params(config.head_channels, 1, 1));
    }
    total += conv_params(2 * config.num_blocks, 1, 1);
    return total;
}

Tensor SemModule::forward(const Tensor& feature) const {
    if (identity()) return feature;
    Tensor reduced = relu(reduce(feature));
    std::vector<Tensor> outs;
    outs.reserve(branches.size());
    for (const auto& br : branches) outs.push_back(relu(br(reduced)));
    return outs.size() == 1 ? outs[0] : add_n(outs);
}

Network::Network(BdcnConfig config) : config_(std::move(config)) {
    config_.validate();
    Initializer init(config_.seed);
    const auto rates = config_.rates();
    std::int64_t c = config_.input_channels;
    for (int b = 0; b < config_.num_blocks; ++b) {
        IdBlock block;
        for (int width : config_.vgg_channel_plan[static_cast<std::size_t>(b)]) {
            block.convs.push_back(init.he(c, width, ConvSpec::same(3)));
            c = width;
            SemModule sem;
            if (!rates.empty()) {
                sem.reduce = init.he(width, config_.sem_mid_channels, ConvSpec::same(3));
                for (int r : rates) {
                    sem.branches.push_back(init.he(config_.sem_mid_channels, config_.sem_mid_channels,
                                                   ConvSpec::same(3, r)));
                }
            }
            block.sems.push_back(std::move(sem));
        }
        const std::int64_t head_in = rates.empty() ? c : config_.sem_mid_channels;
        for (ScoreHead* head : {&block.s2d, &block.d2s}) {
            head->hidden = init.he(head_in, config_.head_channels, ConvSpec::same(1));
            head->score = Initializer::constant(config_.head_channels, 1, ConvSpec::same(1), 0.0f);
        }
        blocks_.push_back(std::move(block));
    }
    const std::int64_t sides = 2 * config_.num_blocks;
    fusion_ = Initializer::constant(sides, 1, ConvSpec::same(1), 1.0f / static_cast<float>(sides));
}

BdcnOutputs Network::forward(const Tensor& image) const {
    const Shape& s = image.shape();
    if (s.c != config_.input_channels) {
        throw ConfigError("image has " + std::to_string(s.c) + " channels, network expects " +
                          std::to_string(config_.input_channels));
    }
    const std::int64_t min_side = std::int64_t{1} << (config_.num_blocks - 1);
    if (s.h < min_side || s.w < min_side) {
        throw ConfigError("input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                          " too small for " + std::to_string(config_.num_blocks) +
                          " blocks (need >= " + std::to_string(min_side) + ")");
    }

    std::vector<Tensor> s2d_logits;
    std::vector<Tensor> d2s_logits;
    Tensor x = image;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const IdBlock& block = blocks_[b];
        if (b > 0) x = maxpool2(x);
        std::vector<Tensor> sem_outs;
        for (std::size_t l = 0; l < block.convs.size(); ++l) {
            x = relu(block.convs[l](x));
            sem_outs.push_back(block.sems[l].forward(x));
        }
        Tensor fused_feat = sem_outs.size() == 1 ? sem_outs[0] : add_n(sem_outs);
        Tensor a = block.s2d.forward(fused_feat);
        Tensor d = block.d2s.forward(fused_feat);
        if (b > 0) {
            a = upsample_bilinear(a, s.h, s.w);
            d = upsample_bilinear(d, s.h, s.w);
        }
        s2d_logits.push_back(std::move(a));
        d2s_logits.push_back(std::move(d));
    }

    std::vector<Tensor> all(s2d_logits);
    all.insert(all.end(), d2s_logits.begin(), d2s_logits.end());
    BdcnOutputs out;
    out.fused = sigmoid(fusion_(concat_channels(all)));
    for (auto& t : s2d_logits) out.side_s2d.push_back(sigmoid(t));
    for (auto& t : d2s_logits) out.side_d2s.push_back(sigmoid(t));
    return out;
}

std::vector<NamedTensor> Network::named_parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const IdBlock& block = blocks_[b];
        const std::string bp = "block" + std::to_string(b + 1);
        for (std::size_t l = 0; l < block.convs.size(); ++l) {
            const std::string cp = bp + ".conv" + std::to_string(l + 1);
            push(out, cp, block.convs[l]);
            const SemModule& sem = block.sems[l];
            if (sem.identity()) continue;
            push(out, cp + ".sem.reduce", sem.reduce);
            for (std::size_t k = 0; k < sem.branches.size(); ++k) {
                push(out, cp + ".sem.branch" + std::to_string(k + 1), sem.branches[k]);
            }
        }
        push(out, bp + ".s2d.hidden", block.s2d.hidden);
        push(out, bp + ".s2d.score", block.s2d.score);
        push(out, bp + ".d2s.hidden", block.d2s.hidden);
        push(out, bp + ".d2s.score", block.d2s.score);
    }
    push(out, "fuse", fusion_);
    return out;
}

std::vector<Tensor> Network::parameters() const {
    std::vector<Tensor> out;
    for (auto& nt : named_parameters()) out.push_back(nt.tensor);
    return out;
}

std::int64_t Network::num_parameters() const {
    std::int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

Checkpoint Network::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.metadata = config_.to_metadata();
    for (auto& nt : named_parameters()) ckpt.records.push_back({nt.name, nt.tensor.detach()});
    return ckpt;
}

Network Network::from_checkpoint(const Checkpoint& ckpt) {
    Network net(BdcnConfig::from_metadata(ckpt.metadata));
    net.load_parameters(ckpt);
    return net;
}

void Network::load_parameters(const Checkpoint& ckpt) {
    for (auto& nt : named_parameters()) {
        const NamedTensor* rec = ckpt.find_record(nt.name);
        if (!rec) throw IntegrityError("checkpoint is missing parameter '" + nt.name + "'");
        if (rec->tensor.shape() != nt.tensor.shape()) {
            throw IntegrityError("parameter '" + nt.name + "' has shape " + rec->tensor.shape().str() +
                                 ", expected " + nt.tensor.shape().str());
        }
        auto dst = nt.tensor.data();
        auto src = rec->tensor.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

std::vector<LayerInfo> Network::layer_table(std::int64_t h, std::int64_t w) const {
    std::vector<LayerInfo> rows;
    auto add = [&rows](std::string name, const ConvLayer& l, std::int64_t oh, std::int64_t ow) {
        const Shape& ws = l.weight.shape();
        rows.push_back({std::move(name), ws, Shape{1, ws.n, oh, ow}, static_cast<int>(l.spec.dilation),
                        l.weight.numel() + l.bias.numel()});
    };
    std::int64_t ch = h;
    std::int64_t cw = w;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const IdBlock& block = blocks_[b];
        const std::string bp = "block" + std::to_string(b + 1);
        if (b > 0) {
            ch = (ch + 1) / 2;
            cw = (cw + 1) / 2;
        }
        for (std::size_t l = 0; l < block.convs.size(); ++l) {
            const std::string cp = bp + ".conv" + std::to_string(l + 1);
            add(cp, block.convs[l], ch, cw);
            const SemModule& sem = block.sems[l];
            if (sem.identity()) continue;
            add(cp + ".sem.reduce", sem.reduce, ch, cw);
            for (std::size_t k = 0; k < sem.branches.size(); ++k) {
                add(cp + ".sem.branch" + std::to_string(k + 1), sem.branches[k], ch, cw);
            }
        }
        add(bp + ".s2d.hidden", block.s2d.hidden, ch, cw);
        add(bp + ".s2d.score", block.s2d.score, ch, cw);
        add(bp + ".d2s.hidden", block.d2s.hidden, ch, cw);
        add(bp + ".d2s.score", block.d2s.score, ch, cw);
    }
    add("fuse", fusion_, h, w);
    return rows;
}

std::vector<std::int64_t> Network::receptive_fields() const {
    std::vector<std::int64_t> out;
    std::int64_t rf = 1;
    std::int64_t jump = 1;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const IdBlock& block = blocks_[b];
        if (b > 0) {
            rf += jump; // 2x2 pool
            jump *= 2;
        }
        std::int64_t best = rf;
        for (std::size_t l = 0; l < block.convs.size(); ++l) {
            rf += (block.convs[l].spec.extent_h() - 1) * jump;
            const SemModule& sem = block.sems[l];
            std::int64_t sem_rf = rf;
            if (!sem.identity()) {
                std::int64_t widest = 1;
                for (const auto& br : sem.branches) widest = std::max(widest, br.spec.extent_h());
                sem_rf += (sem.reduce.spec.extent_h() - 1 + widest - 1) * jump;
            }
            best = std::max(best, sem_rf);
        }
        out.push_back(best);
    }
    return out;
}

Tensor resize_bilinear(const Tensor& input, std::int64_t h, std::int64_t w) {
    const Shape& s = input.shape();
    if (h < 1 || w < 1) throw ConfigError("resize_bilinear: empty target size");
    if (h == s.h && w == s.w) return input.detach();
    auto coord = [](std::int64_t i, std::int64_t in, std::int64_t out) {
        if (in == 1 || out == 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    };
    Shape os{s.n, s.c, h, w};
    std::vector<float> out(static_cast<std::size_t>(os.numel()));
    for (std::int64_t pl = 0; pl < s.n * s.c; ++pl) {
        const float* src = input.data().data() + pl * s.plane();
        float* dst = out.data() + pl * os.plane();
        for (std::int64_t y = 0; y < h; ++y) {
            const double sy = coord(y, s.h, h);
            const auto y0 = std::min<std::int64_t>(static_cast<std::int64_t>(sy), s.h - 1);
            const auto y1 = std::min<std::int64_t>(y0 + 1, s.h - 1);
            const double fy = sy - static_cast<double>(y0);
            for (std::int64_t x = 0; x < w; ++x) {
                const double sx = coord(x, s.w, w);
                const auto x0 = std::min<std::int64_t>(static_cast<std::int64_t>(sx), s.w - 1);
                const auto x1 = std::min<std::int64_t>(x0 + 1, s.w - 1);
                const double fx = sx - static_cast<double>(x0);
                const double top = src[y0 * s.w + x0] * (1 - fx) + src[y0 * s.w + x1] * fx;
                const double bot = src[y1 * s.w + x0] * (1 - fx) + src[y1 * s.w + x1] * fx;
                dst[y * w + x] = static_cast<float>(top * (1 - fy) + bot * fy);
            }
        }
    }
    return Tensor::from_data(os, std::move(out));
}

EdgeProbMap predict_multiscale(const Network& net, const Tensor& image, std::span<const double> scales) {
    if (scales.empty()) throw ConfigError("predict_multiscale: empty scale list");
    for (double sc : scales) {
        if (!(sc > 0.0)) throw ConfigError("predict_multiscale: scales must be positive");
    }
    NoGradGuard no_grad;
    const Shape& s = image.shape();
    std::vector<double> acc(static_cast<std::size_t>(s.plane()), 0.0);
    for (double sc : scales) {
        Tensor fused;
        if (sc == 1.0) {
            fused = net.forward(image).fused;
        } else {
            const auto h = std::max<std::int64_t>(1, std::llround(static_cast<double>(s.h) * sc));
            const auto w = std::max<std::int64_t>(1, std::llround(static_cast<double>(s.w) * sc));
            fused = resize_bilinear(net.forward(resize_bilinear(image, h, w)).fused, s.h, s.w);
        }
        auto d = fused.data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
    }
    EdgeProbMap out(s.h, s.w);
    for (std::size_t i = 0; i < acc.size(); ++i) {
        out.values[i] = static_cast<float>(acc[i] / static_cast<double>(scales.size()));
    }
    return out;
}

} // namespace bdcn
