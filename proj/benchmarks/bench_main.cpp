// Throughput of the hot paths at full benchmark image size (320x480).

#include <benchmark/benchmark.h>

#include <random>

#include "bdcn/data.hpp"
#include "bdcn/eval.hpp"
#include "bdcn/loss.hpp"
#include "bdcn/network.hpp"
#include "bdcn/ops.hpp"

using namespace bdcn;

namespace {

constexpr std::int64_t kH = 320;
constexpr std::int64_t kW = 480;

Tensor random_tensor(const Shape& s, std::uint64_t seed, bool grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) x = u(rng);
    return Tensor::from_data(s, std::move(v), grad);
}

// 3x3 conv at the SEM reduction width; arg 0 is the input channel count,
// arg 1 the dilation.
void BM_Conv3x3(benchmark::State& state) {
    const std::int64_t c = state.range(0);
    const std::int64_t r = state.range(1);
    const Tensor x = random_tensor(Shape{1, c, kH / 2, kW / 2}, 1);
    const Tensor w = random_tensor(Shape{32, c, 3, 3}, 2);
    const Tensor b = random_tensor(Shape{1, 32, 1, 1}, 3);
    NoGradGuard g;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, ConvSpec::same(3, r)).data().data());
    state.SetItemsProcessed(state.iterations() * 32 * c * 9 * (kH / 2) * (kW / 2));
}
BENCHMARK(BM_Conv3x3)->Args({64, 1})->Args({128, 1})->Args({32, 4})->Args({32, 12})->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
    const Tensor x = random_tensor(Shape{1, 64, kH / 2, kW / 2}, 1, true);
    const Tensor w = random_tensor(Shape{64, 64, 3, 3}, 2, true);
    const Tensor b = random_tensor(Shape{1, 64, 1, 1}, 3, true);
    for (auto _ : state) {
        sum(conv2d(x, w, b, ConvSpec::same(3))).backward();
    }
}
BENCHMARK(BM_ConvBackward)->Unit(benchmark::kMillisecond);

// Full network forward (inference) and forward+backward through the loss;
// arg is the number of ID blocks.
void BM_NetworkForward(benchmark::State& state) {
    BdcnConfig cfg;
    cfg.num_blocks = static_cast<int>(state.range(0));
    const Network net(cfg);
    const Tensor img = random_tensor(Shape{1, 3, kH, kW}, 4);
    NoGradGuard g;
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(img).fused.data().data());
}
BENCHMARK(BM_NetworkForward)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_NetworkTrainStep(benchmark::State& state) {
    BdcnConfig cfg;
    cfg.num_blocks = static_cast<int>(state.range(0));
    const Network net(cfg);
    const Sample s = synth_shapes(5, 1, kW).front().sample;
    const Sample cropped = crop(s, 0, 0, kH, kW);
    for (auto _ : state) {
        const BdcnOutputs o = net.forward(cropped.image);
        total_loss(o, build_cascade_targets(cropped.gt, o), cropped.gt, LossWeights{}).total.backward();
    }
}
BENCHMARK(BM_NetworkTrainStep)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond)->Iterations(1);

Map2D random_prob(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Map2D m(kH, kW);
    for (auto& v : m.values) v = u(rng);
    return m;
}

void BM_Nms(benchmark::State& state) {
    const Map2D p = random_prob(6);
    for (auto _ : state) benchmark::DoNotOptimize(eval::nms_thin(p).values.data());
}
BENCHMARK(BM_Nms)->Unit(benchmark::kMillisecond);

// Matching a thinned prediction against synthetic boundaries at the default
// tolerance (radius about 4.3 px).
void BM_MatchEdges(benchmark::State& state) {
    const Sample s = synth_shapes(7, 1, kW).front().sample;
    const Map2D gt = eval::gt_mask(crop(s, 0, 0, kH, kW).gt.values);
    Map2D pred(kH, kW);
    for (std::int64_t y = 0; y < kH; ++y)
        for (std::int64_t x = 1; x < kW; ++x) pred(y, x) = gt(y, x - 1);
    for (auto _ : state) benchmark::DoNotOptimize(eval::match_edges(pred, gt, eval::kBsdsTolerance).tp);
}
BENCHMARK(BM_MatchEdges)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
    const std::vector<Map2D> probs{random_prob(8)};
    const Sample s = synth_shapes(9, 1, kW).front().sample;
    const std::vector<Map2D> gts{eval::gt_mask(crop(s, 0, 0, kH, kW).gt.values)};
    for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate(probs, gts).ods_f);
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond)->Iterations(1);

} // namespace

// The distro benchmark_main archive is LTO bytecode from another compiler
// release, so the main is provided here.
BENCHMARK_MAIN();
