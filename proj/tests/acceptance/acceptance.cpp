// Acceptance suite. Each criterion prints one line:
//
//   criterion N [PASS|FAIL] <name>: <measurements>
//
// Usage: bdcn_acceptance [N ...]   (no arguments runs all ten)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bdcn/checkpoint.hpp"
#include "bdcn/data.hpp"
#include "bdcn/eval.hpp"
#include "bdcn/loss.hpp"
#include "bdcn/network.hpp"
#include "bdcn/trainer.hpp"
#include "commands.hpp"
#include "testing.hpp"

using namespace bdcn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets, all taken from the criteria.
constexpr double kGradRelTol = 1e-3;
constexpr int kGradInstances = 20;
constexpr double kGradBudgetSec = 120.0;
constexpr double kConvRefTol = 1e-6;
constexpr double kNaiveGradTol = 1e-6;
constexpr double kCascadeGradMinDiff = 1e-3;
constexpr double kParamCountBand = 0.15;
constexpr int kMatcherFixtures = 200;
constexpr double kMatcherDivergence = 0.02;
constexpr double kMatcherBudgetSec = 60.0;
constexpr double kPerfectApMin = 0.99;
constexpr double kToyOdsMin = 0.90;
constexpr int kToyMaxIterations = 2000;
constexpr double kToyBudgetSec = 30.0 * 60.0;

// Largest tolerated share of finite-difference coordinates dropped because the
// step crossed a ReLU/max-pool kink.
constexpr double kMaxKinkSkip = 0.5;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

// ---------------------------------------------------------------- 1

struct OpCase {
    std::string name;
    bool kinks = false;
    double eps = 1e-2;
    // Builds fresh random leaves and returns (f, leaves).
    std::function<std::pair<std::function<Tensor()>, std::vector<Tensor>>(std::mt19937_64&)> make;
};

std::int64_t pick(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

std::vector<OpCase> op_cases() {
    using testing::random_tensor;
    std::vector<OpCase> cases;
    cases.push_back({"conv2d", false, 1e-2, [](std::mt19937_64& rng) {
                         const int k = rng() % 3 == 0 ? 1 : 3;
                         const int dil = std::vector<int>{1, 2, 4, 8, 12}[rng() % 5];
                         const int stride = static_cast<int>(pick(rng, 1, 2));
                         const ConvSpec s{k, k, stride, k == 1 ? 0 : dil, k == 1 ? 1 : dil};
                         Tensor x = random_tensor(Shape{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 8), pick(rng, 4, 8)},
                                                  rng, -1, 1, true);
                         Tensor w = random_tensor(Shape{pick(rng, 1, 3), x.shape().c, k, k}, rng, -1, 1, true);
                         Tensor b = random_tensor(Shape{1, w.shape().n, 1, 1}, rng, -1, 1, true);
                         return std::pair{std::function<Tensor()>([=] { return conv2d(x, w, b, s); }),
                                          std::vector<Tensor>{x, w, b}};
                     }});
    cases.push_back({"maxpool2", true, 1e-2, [](std::mt19937_64& rng) {
                         Tensor x = random_tensor(Shape{1, pick(rng, 1, 3), pick(rng, 2, 9), pick(rng, 2, 9)}, rng, -1, 1,
                                                  true);
                         return std::pair{std::function<Tensor()>([=] { return maxpool2(x); }), std::vector<Tensor>{x}};
                     }});
    cases.push_back({"upsample_bilinear", false, 1e-2, [](std::mt19937_64& rng) {
                         Tensor x = random_tensor(Shape{1, pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 2, 4)}, rng, -1, 1,
                                                  true);
                         const std::int64_t oh = x.shape().h * pick(rng, 1, 4);
                         const std::int64_t ow = x.shape().w * pick(rng, 1, 4) + 1;
                         return std::pair{std::function<Tensor()>([=] { return upsample_bilinear(x, oh, ow); }),
                                          std::vector<Tensor>{x}};
                     }});
    cases.push_back({"relu", true, 1e-2, [](std::mt19937_64& rng) {
                         Tensor x = random_tensor(Shape{1, 2, pick(rng, 2, 6), pick(rng, 2, 6)}, rng, -1, 1, true);
                         return std::pair{std::function<Tensor()>([=] { return relu(x); }), std::vector<Tensor>{x}};
                     }});
    cases.push_back({"sigmoid", false, 1e-2, [](std::mt19937_64& rng) {
                         Tensor x = random_tensor(Shape{1, 2, pick(rng, 2, 6), pick(rng, 2, 6)}, rng, -3, 3, true);
                         return std::pair{std::function<Tensor()>([=] { return sigmoid(x); }), std::vector<Tensor>{x}};
                     }});
    cases.push_back({"add", false, 1e-2, [](std::mt19937_64& rng) {
                         const Shape s{1, 2, pick(rng, 2, 6), pick(rng, 2, 6)};
                         Tensor a = random_tensor(s, rng, -1, 1, true);
                         Tensor b = random_tensor(s, rng, -1, 1, true);
                         return std::pair{std::function<Tensor()>([=] { return add(a, b); }), std::vector<Tensor>{a, b}};
                     }});
    cases.push_back({"add_n", false, 1e-2, [](std::mt19937_64& rng) {
                         const Shape s{1, 2, pick(rng, 2, 6), pick(rng, 2, 6)};
                         Tensor a = random_tensor(s, rng, -1, 1, true);
                         Tensor b = random_tensor(s, rng, -1, 1, true);
                         return std::pair{std::function<Tensor()>([=] {
                                              const Tensor terms[] = {a, b, a};
                                              return add_n(terms);
                                          }),
                                          std::vector<Tensor>{a, b}};
                     }});
    cases.push_back({"scale", false, 1e-2, [](std::mt19937_64& rng) {
                         Tensor x = random_tensor(Shape{1, 2, pick(rng, 2, 6), pick(rng, 2, 6)}, rng, -1, 1, true);
                         const float k = std::uniform_real_distribution<float>(-3, 3)(rng);
                         return std::pair{std::function<Tensor()>([=] { return scale(x, k); }), std::vector<Tensor>{x}};
                     }});
    cases.push_back({"sum", false, 1e-2, [](std::mt19937_64& rng) {
                         Tensor x = random_tensor(Shape{2, 2, pick(rng, 2, 6), pick(rng, 2, 6)}, rng, -1, 1, true);
                         return std::pair{std::function<Tensor()>([=] { return sum(x); }), std::vector<Tensor>{x}};
                     }});
    cases.push_back({"concat_channels", false, 1e-2, [](std::mt19937_64& rng) {
                         const std::int64_t h = pick(rng, 2, 6), w = pick(rng, 2, 6);
                         Tensor a = random_tensor(Shape{1, pick(rng, 1, 3), h, w}, rng, -1, 1, true);
                         Tensor b = random_tensor(Shape{1, pick(rng, 1, 3), h, w}, rng, -1, 1, true);
                         return std::pair{std::function<Tensor()>([=] {
                                              const Tensor parts[] = {a, b};
                                              return concat_channels(parts);
                                          }),
                                          std::vector<Tensor>{a, b}};
                     }});
    cases.push_back({"select_plane", false, 1e-2, [](std::mt19937_64& rng) {
                         Tensor x = random_tensor(Shape{2, 3, pick(rng, 2, 6), pick(rng, 2, 6)}, rng, -1, 1, true);
                         const std::int64_t n = pick(rng, 0, 1), c = pick(rng, 0, 2);
                         return std::pair{std::function<Tensor()>([=] { return select_plane(x, n, c); }),
                                          std::vector<Tensor>{x}};
                     }});
    cases.push_back({"balanced_bce", false, 5e-3, [](std::mt19937_64& rng) {
                         const std::int64_t h = pick(rng, 2, 6), w = pick(rng, 2, 6);
                         ConsensusGT gt;
                         gt.values = Map2D(h, w);
                         std::discrete_distribution<int> kind({5, 2, 3}); // background, ambiguous, edge
                         for (auto& v : gt.values.values) {
                             const int k = kind(rng);
                             v = k == 0 ? 0.0f : k == 1 ? 0.2f : 1.0f;
                         }
                         const LayerTarget t = raw_target(gt);
                         Tensor p = random_tensor(Shape{1, 1, h, w}, rng, 0.15f, 0.85f, true);
                         return std::pair{std::function<Tensor()>([=] { return balanced_bce(p, t, 1.1); }),
                                          std::vector<Tensor>{p}};
                     }});
    return cases;
}

Outcome criterion_1() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    std::string worst_op;
    double worst_skip = 0.0;
    int checked = 0;
    bool ok = true;
    for (const auto& c : op_cases()) {
        for (int i = 0; i < kGradInstances; ++i) {
            auto [f, leaves] = c.make(rng);
            const auto r = testing::grad_check(f, leaves, rng, 24, c.eps, c.kinks);
            ++checked;
            if (r.rel_error > worst) {
                worst = r.rel_error;
                worst_op = c.name;
            }
            worst_skip = std::max(worst_skip, r.skipped_fraction());
            if (!(r.rel_error <= kGradRelTol) || r.coords == 0) {
                ok = false;
                std::printf("  %s instance %d: rel error %.3g over %d coords\n", c.name.c_str(), i, r.rel_error,
                            r.coords);
            }
        }
    }

    // Full S=2 network (reference channel plan) on random 8x8-10x10 inputs.
    // The score and fusion layers are re-drawn so every parameter carries
    // gradient (the score convs start at zero).
    double net_worst = 0.0;
    for (int i = 0; i < kGradInstances; ++i) {
        BdcnConfig cfg;
        cfg.num_blocks = 2;
        cfg.seed = 500 + static_cast<std::uint64_t>(i);
        Network net(cfg);
        std::uniform_real_distribution<float> d(-0.3f, 0.3f);
        for (const auto& [name, t] : net.named_parameters()) {
            if (name.find("score") != std::string::npos || name.find("fusion") != std::string::npos) {
                Tensor h = t;
                for (auto& v : h.data()) v = d(rng);
            }
        }
        Tensor img = testing::random_tensor(Shape{1, 3, pick(rng, 8, 10), pick(rng, 8, 10)}, rng, 0, 1, true);
        std::vector<Tensor> leaves = net.parameters();
        leaves.push_back(img);
        const auto r = testing::grad_check(
            [&] {
                const BdcnOutputs o = net.forward(img);
                std::vector<Tensor> maps = o.side_s2d;
                maps.insert(maps.end(), o.side_d2s.begin(), o.side_d2s.end());
                maps.push_back(o.fused);
                return concat_channels(maps);
            },
            leaves, rng, 4, 1e-2, true);
        ++checked;
        net_worst = std::max(net_worst, r.rel_error);
        worst_skip = std::max(worst_skip, r.skipped_fraction());
        if (!(r.rel_error <= kGradRelTol) || r.skipped_fraction() > kMaxKinkSkip || r.coords == 0) {
            ok = false;
            std::printf("  network instance %d: rel error %.3g, %d coords, %.0f%% skipped at kinks\n", i, r.rel_error,
                        r.coords, 100.0 * r.skipped_fraction());
        }
    }
    const double sec = seconds_since(t0);
    ok = ok && sec < kGradBudgetSec;
    return {ok, fmt("%d instances (12 ops and the S=2 network, %d each); worst op rel error %.2g (%s), network %.2g "
                    "(tol %.0e); at most %.0f%% of coordinates skipped at kinks; %.1f s (budget %.0f s)",
                    checked, kGradInstances, worst, worst_op.c_str(), net_worst, kGradRelTol, 100.0 * worst_skip, sec,
                    kGradBudgetSec)};
}

// ---------------------------------------------------------------- 2

Outcome criterion_2() {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int i = 0; i < 40; ++i) {
        const int k = i % 2 ? 3 : static_cast<int>(pick(rng, 1, 5));
        const ConvSpec s{k, k, static_cast<int>(pick(rng, 1, 2)), static_cast<int>(pick(rng, 0, 2)), 1};
        const Tensor x = testing::random_tensor(Shape{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 5, 12), pick(rng, 5, 12)},
                                                rng);
        const Tensor w = testing::random_tensor(Shape{pick(rng, 1, 4), x.shape().c, k, k}, rng);
        const Tensor b = testing::random_tensor(Shape{1, w.shape().n, 1, 1}, rng);
        const Tensor y = conv2d(x, w, b, s);
        const Tensor ref = testing::reference_conv2d(x, w, b, s);
        worst = std::max(worst, y.shape() == ref.shape() ? testing::max_abs_diff(y.data(), ref.data()) : 1e9);
    }

    // Impulse response: a single 1 through an all-ones k x k kernel at rate r.
    std::string extents;
    bool extents_ok = true;
    for (int k : {3, 5}) {
        for (int r : {1, 4, 8, 12}) {
            Tensor x = Tensor::zeros(Shape{1, 1, 61, 61});
            x.data()[30 * 61 + 30] = 1.0f;
            const Tensor w = Tensor::from_data(Shape{1, 1, k, k}, std::vector<float>(static_cast<std::size_t>(k * k), 1.0f));
            const Tensor y = conv2d(x, w, Tensor(), ConvSpec::same(k, r));
            std::int64_t lo = 61, hi = -1;
            for (std::int64_t yy = 0; yy < 61; ++yy)
                for (std::int64_t xx = 0; xx < 61; ++xx)
                    if (y.at(0, 0, yy, xx) != 0.0f) {
                        lo = std::min({lo, yy, xx});
                        hi = std::max({hi, yy, xx});
                    }
            const std::int64_t extent = hi - lo + 1;
            const std::int64_t expect = r * (k - 1) + 1;
            extents_ok = extents_ok && extent == expect;
            if (k == 3) extents += (extents.empty() ? "" : ", ") + fmt("r=%d: %lld", r, static_cast<long long>(extent));
        }
    }
    const bool ok = worst <= kConvRefTol && extents_ok;
    return {ok, fmt("r=1 conv vs nested-loop reference over 40 instances: max abs diff %.2g (tol %.0e); "
                    "3x3 impulse extents %s (expected r*(k-1)+1; 5x5 also checked)",
                    worst, kConvRefTol, extents.c_str())};
}

// ---------------------------------------------------------------- 3

Outcome criterion_3() {
    // Fixture: side predictions of a freshly built S=3 network on a synthetic
    // image, detached and used as leaves.
    const auto data = synth_shapes(303, 1, 32);
    const Sample& s = data[0].sample;
    BdcnConfig cfg;
    cfg.num_blocks = 3;
    cfg.seed = 3;
    Network net(cfg);
    std::mt19937_64 rng(303);
    for (const auto& [name, t] : net.named_parameters()) {
        if (name.find("score") != std::string::npos) {
            Tensor h = t;
            for (auto& v : h.data()) v = std::uniform_real_distribution<float>(-0.05f, 0.05f)(rng);
        }
    }
    BdcnOutputs o;
    {
        NoGradGuard g;
        o = net.forward(s.image);
    }
    auto leafify = [](std::vector<Tensor>& v) {
        for (auto& t : v) t = Tensor::from_data(t.shape(), std::vector<float>(t.data().begin(), t.data().end()), true);
    };
    leafify(o.side_s2d);
    leafify(o.side_d2s);
    o.fused = Tensor::from_data(o.fused.shape(), std::vector<float>(o.fused.data().begin(), o.fused.data().end()), true);

    // The naive sum of all 2S side maps can exceed 1, so scale them into a
    // range where the summed map stays a probability.
    std::vector<Tensor> preds;
    for (const auto* list : {&o.side_s2d, &o.side_d2s})
        for (const auto& t : *list) {
            std::vector<float> v(t.data().begin(), t.data().end());
            for (auto& x : v) x /= static_cast<float>(2 * cfg.num_blocks);
            preds.push_back(Tensor::from_data(t.shape(), std::move(v), true));
        }
    naive_summed_loss(preds, s.gt, 1.1).backward();
    double naive_diff = 0.0;
    for (std::size_t i = 1; i < preds.size(); ++i) {
        naive_diff = std::max(naive_diff, testing::max_abs_diff(preds[i].grad(), preds[0].grad()));
    }

    // Cascade loss on the same predictions.
    BdcnOutputs scaled;
    scaled.side_s2d.assign(preds.begin(), preds.begin() + cfg.num_blocks);
    scaled.side_d2s.assign(preds.begin() + cfg.num_blocks, preds.end());
    scaled.fused = o.fused;
    for (auto& p : preds) p.zero_grad();
    total_loss(scaled, build_cascade_targets(s.gt, scaled), s.gt, LossWeights{}).total.backward();
    double cascade_min = 1e9;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (std::size_t j = i + 1; j < preds.size(); ++j) {
            cascade_min = std::min(cascade_min, testing::max_abs_diff(preds[i].grad(), preds[j].grad()));
        }
    const bool ok = naive_diff <= kNaiveGradTol && cascade_min > kCascadeGradMinDiff;
    return {ok, fmt("%zu side maps of an S=3 network on a 32x32 synthetic image: naive summed loss max gradient "
                    "difference %.2g (tol %.0e); cascade loss smallest pairwise max difference %.3g (must exceed %.0e)",
                    preds.size(), naive_diff, kNaiveGradTol, cascade_min, kCascadeGradMinDiff)};
}

// ---------------------------------------------------------------- 4

Outcome criterion_4() {
    const std::map<int, std::vector<int>> table = {
        {0, {1, 1, 1}}, {1, {1, 2, 3}}, {2, {2, 4, 6}}, {4, {4, 8, 12}}, {8, {8, 16, 24}}};
    bool ok = true;
    std::string rows;
    for (const auto& [r0, expect] : table) {
        const auto got = sem_rates(3, r0);
        BdcnConfig c;
        c.dilation_factor = r0;
        ok = ok && got == expect && c.rates() == expect;
        // The built modules use the same rates.
        BdcnConfig small;
        small.num_blocks = 2;
        small.dilation_factor = r0;
        small.vgg_channel_plan = {{2, 2}, {2, 2}, {2}, {2}, {2}};
        small.sem_mid_channels = 2;
        small.head_channels = 2;
        const Network net(small);
        for (const auto& b : net.blocks())
            for (const auto& sem : b.sems)
                for (std::size_t k = 0; k < sem.branches.size(); ++k) ok = ok && sem.branches[k].spec.dilation == expect[k];
        rows += fmt("%s%d->%d,%d,%d", rows.empty() ? "" : "; ", r0, got[0], got[1], got[2]);
    }
    return {ok, "K=3 rates " + rows + " (built SEM branches agree)"};
}

// ---------------------------------------------------------------- 5

Outcome criterion_5() {
    const double target[4] = {0.28e6, 2.26e6, 8.69e6, 16e6};
    bool ok = true;
    std::string rows;
    std::int64_t prev = 0;
    for (int s = 2; s <= 5; ++s) {
        BdcnConfig c;
        c.num_blocks = s;
        const std::int64_t n = param_count(c);
        const std::int64_t built = Network(c).num_parameters();
        const double rel = static_cast<double>(n) / target[s - 2] - 1.0;
        const bool in_band = std::abs(rel) <= kParamCountBand && n == built;
        ok = ok && in_band && n > prev;
        prev = n;
        rows += fmt("%sS=%d %lld (%.2fM, %+.1f%% vs %.2fM%s)", rows.empty() ? "" : "; ", s, static_cast<long long>(n),
                    static_cast<double>(n) / 1e6, 100.0 * rel, target[s - 2] / 1e6, in_band ? "" : ", out of band");
    }
    return {ok, rows + fmt("; band +/-%.0f%%, monotone in S", 100.0 * kParamCountBand)};
}

// ---------------------------------------------------------------- 6

Outcome criterion_6() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(606);
    std::int64_t tp_total = 0;
    std::int64_t divergence = 0;
    int diverging = 0;
    for (int f = 0; f < kMatcherFixtures; ++f) {
        const std::int64_t h = pick(rng, 8, 32), w = pick(rng, 8, 32);
        // Tolerance chosen so the radius spans 1-3 pixels.
        const double radius = std::uniform_real_distribution<double>(1.0, 3.0)(rng);
        const double tol = radius / std::hypot(static_cast<double>(h), static_cast<double>(w));
        Map2D p(h, w), g(h, w);
        // Clustered pixels (a short random walk) make contested pairs common.
        auto scatter = [&](Map2D& m, std::int64_t n) {
            std::int64_t y = pick(rng, 0, h - 1), x = pick(rng, 0, w - 1);
            for (std::int64_t i = 0; i < n; ++i) {
                if (rng() % 4 == 0) {
                    y = pick(rng, 0, h - 1);
                    x = pick(rng, 0, w - 1);
                } else {
                    y = std::clamp<std::int64_t>(y + pick(rng, -1, 1), 0, h - 1);
                    x = std::clamp<std::int64_t>(x + pick(rng, -1, 1), 0, w - 1);
                }
                m(y, x) = 1.0f;
            }
        };
        scatter(p, pick(rng, 1, 20));
        scatter(g, pick(rng, 1, 20));
        const std::int64_t got = eval::match_edges(p, g, tol).tp;
        const std::int64_t best = testing::exhaustive_match_count(p, g, eval::match_radius(h, w, tol));
        tp_total += best;
        if (got != best) {
            ++diverging;
            divergence += std::abs(best - got);
            std::printf("  fixture %d (%lldx%lld, radius %.2f): matcher tp %lld, exhaustive %lld\n", f,
                        static_cast<long long>(h), static_cast<long long>(w), radius, static_cast<long long>(got),
                        static_cast<long long>(best));
        }
    }
    const double sec = seconds_since(t0);
    const double share = tp_total ? static_cast<double>(divergence) / static_cast<double>(tp_total) : 0.0;
    const bool ok = share <= kMatcherDivergence && sec < kMatcherBudgetSec;
    return {ok, fmt("%d fixtures up to 32x32, 1-20 pixels per side, radius 1-3 px: %d diverging, tp difference %lld of "
                    "%lld (%.2f%%, limit %.0f%%); %.2f s (budget %.0f s)",
                    kMatcherFixtures, diverging, static_cast<long long>(divergence), static_cast<long long>(tp_total),
                    100.0 * share, 100.0 * kMatcherDivergence, sec, kMatcherBudgetSec)};
}

// ---------------------------------------------------------------- 7

Outcome criterion_7() {
    // Perfect predictions.
    std::vector<Map2D> gts;
    for (const auto& s : synth_shapes(707, 10, 64)) gts.push_back(eval::gt_mask(s.sample.gt.values));
    const eval::EvalSummary perfect = eval::evaluate(gts, gts);
    const bool perfect_ok = perfect.ods_f == 1.0 && perfect.ois_f == 1.0 && perfect.ap >= kPerfectApMin;

    // OIS >= ODS on random fixtures.
    std::mt19937_64 rng(707);
    int ois_violations = 0;
    const int random_sets = 50;
    for (int i = 0; i < random_sets; ++i) {
        std::vector<Map2D> probs, masks;
        const int n = static_cast<int>(pick(rng, 1, 5));
        for (int k = 0; k < n; ++k) {
            const std::int64_t h = pick(rng, 12, 40), w = pick(rng, 12, 40);
            Map2D p(h, w), m(h, w);
            std::uniform_real_distribution<float> u(0.0f, 1.0f);
            for (auto& v : p.values) v = u(rng) < 0.6f ? 0.0f : u(rng);
            for (auto& v : m.values) v = u(rng) < 0.1f ? 1.0f : 0.0f;
            probs.push_back(std::move(p));
            masks.push_back(std::move(m));
        }
        const double tol = std::uniform_real_distribution<double>(0.005, 0.05)(rng);
        const eval::EvalSummary r = eval::evaluate(probs, masks, tol);
        if (r.ois_f < r.ods_f) {
            ++ois_violations;
            std::printf("  random set %d (%d images, tol %.4f): OIS %.5f below ODS %.5f\n", i, n, tol, r.ois_f, r.ods_f);
        }
    }

    // One-pixel shifts of synthetic contours at 100x100, default tolerance.
    std::int64_t fp = 0, fn = 0, tp = 0;
    const auto shapes = synth_shapes(717, 8, 100);
    const int shifts[4][2] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
    for (const auto& s : shapes) {
        const Map2D g = eval::gt_mask(s.sample.gt.values);
        for (const auto& d : shifts) {
            Map2D p(100, 100);
            for (std::int64_t y = 0; y < 100; ++y)
                for (std::int64_t x = 0; x < 100; ++x) {
                    const std::int64_t sy = y - d[0], sx = x - d[1];
                    if (sy >= 0 && sy < 100 && sx >= 0 && sx < 100) p(y, x) = g(sy, sx);
                }
            const std::vector<Map2D> pv{p}, gv{g};
            const eval::EvalSummary r = eval::evaluate(pv, gv, eval::kBsdsTolerance);
            for (const auto& pt : r.curve) {
                fp += pt.fp;
                fn += pt.fn;
                tp += pt.tp;
            }
        }
    }
    const bool ok = perfect_ok && ois_violations == 0 && fp == 0 && fn == 0 && tp > 0;
    return {ok, fmt("GT as prediction: ODS %.4f OIS %.4f AP %.4f (AP >= %.2f); OIS < ODS on %d of %d random sets; "
                    "1-px shifts (4 directions x %zu images, 100x100, tol 0.0075) summed over all thresholds: "
                    "tp %lld fp %lld fn %lld",
                    perfect.ods_f, perfect.ois_f, perfect.ap, kPerfectApMin, ois_violations, random_sets, shapes.size(),
                    static_cast<long long>(tp), static_cast<long long>(fp), static_cast<long long>(fn))};
}

// ---------------------------------------------------------------- 8, 9

struct ToyRun {
    Network net;
    double seconds = 0.0;
};

TrainSettings toy_settings(int iterations) {
    // Reference loss weights (lambda 1.1, gamma 0.3 in the data, w_side 0.5,
    // w_fuse 1.1). The optimizer is retuned for a from-scratch toy run: the
    // reference 1e-6 learning rate assumes a pretrained backbone.
    TrainSettings t;
    t.sgd.learning_rate = 5e-5;
    t.batch_size = 1;
    t.iterations = iterations;
    t.lr_decay_step = 0;
    t.augment = true;
    t.seed = 3;
    return t;
}

ToyRun train_toy(int blocks, const std::vector<Sample>& samples, int iterations) {
    BdcnConfig cfg;
    cfg.num_blocks = blocks;
    cfg.seed = 1;
    ToyRun run{Network(cfg)};
    Trainer tr(run.net, toy_settings(iterations));
    const auto t0 = Clock::now();
    for (int i = 0; i < iterations; ++i) (void)tr.step(samples);
    run.seconds = seconds_since(t0);
    return run;
}

Outcome criterion_8() {
    constexpr int iterations = 1000;
    static_assert(iterations <= kToyMaxIterations);
    const auto data = synth_shapes(7, 20, 64);
    std::vector<Sample> samples;
    for (const auto& s : data) samples.push_back(s.sample);
    ToyRun run = train_toy(2, samples, iterations);
    std::vector<Map2D> probs, gts;
    {
        NoGradGuard g;
        for (const auto& s : samples) {
            probs.push_back(plane_of(run.net.forward(s.image).fused));
            gts.push_back(eval::gt_mask(s.gt.values));
        }
    }
    const eval::EvalSummary r = eval::evaluate(probs, gts);
    const bool ok = r.ods_f >= kToyOdsMin && run.seconds < kToyBudgetSec;
    return {ok, fmt("S=2, 20 synthetic 64x64 images, %d iterations (batch 1, lr 5e-5, flip/rotate/scale augmentation): "
                    "training-set ODS %.4f (min %.2f), OIS %.4f, AP %.4f; training %.0f s (budget %.0f s)",
                    iterations, r.ods_f, kToyOdsMin, r.ois_f, r.ap, run.seconds, kToyBudgetSec)};
}

Outcome criterion_9() {
    constexpr int iterations = 500;
    constexpr int blocks = 3;
    const auto data = synth_shapes(11, 20, 64);
    std::vector<Sample> samples;
    for (const auto& s : data) samples.push_back(s.sample);
    ToyRun run = train_toy(blocks, samples, iterations);

    // Each block is scored through the mean of its two side maps against the
    // small-only and large-only boundary masks.
    std::vector<std::vector<Map2D>> per_block(blocks);
    std::vector<Map2D> small, large;
    {
        NoGradGuard g;
        for (const auto& s : data) {
            const BdcnOutputs o = run.net.forward(s.sample.image);
            for (int b = 0; b < blocks; ++b) {
                Map2D m = plane_of(o.side_s2d[static_cast<std::size_t>(b)]);
                const Map2D d = plane_of(o.side_d2s[static_cast<std::size_t>(b)]);
                for (std::size_t p = 0; p < m.values.size(); ++p) m.values[p] = 0.5f * (m.values[p] + d.values[p]);
                per_block[static_cast<std::size_t>(b)].push_back(std::move(m));
            }
            small.push_back(s.gt_small);
            large.push_back(s.gt_large);
        }
    }
    std::vector<double> ods_small, ods_large;
    std::string rows;
    for (int b = 0; b < blocks; ++b) {
        ods_small.push_back(eval::evaluate(per_block[static_cast<std::size_t>(b)], small).ods_f);
        ods_large.push_back(eval::evaluate(per_block[static_cast<std::size_t>(b)], large).ods_f);
        rows += fmt("%sblock %d small %.3f large %.3f", rows.empty() ? "" : ", ", b + 1, ods_small.back(),
                    ods_large.back());
    }
    const bool shallow_small = ods_small[0] > ods_large[0];
    int deeper_large = 0;
    for (int b = 1; b < blocks; ++b) {
        if (ods_large[static_cast<std::size_t>(b)] > ods_small[static_cast<std::size_t>(b)]) deeper_large = b + 1;
    }
    const bool ok = shallow_small && deeper_large > 0;
    return {ok, fmt("S=%d after %d iterations on 20 two-regime 64x64 images; side-map ODS: %s; shallowest block "
                    "prefers %s shapes, %s",
                    blocks, iterations, rows.c_str(), shallow_small ? "small" : "large",
                    deeper_large ? fmt("block %d prefers large shapes", deeper_large).c_str()
                                 : "no deeper block prefers large shapes")};
}

// ---------------------------------------------------------------- 10

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion_10() {
    const fs::path root = fs::temp_directory_path() / "bdcn_acceptance_determinism";
    fs::remove_all(root);
    write_dataset(root / "data", synth_shapes(1010, 4, 32));
    auto run = [&](const std::string& name) {
        cli::RunConfig c;
        c.net.num_blocks = 2;
        c.manifest = root / "data" / "manifest.tsv";
        c.out_dir = root / name;
        c.train.batch_size = 2;
        c.train.iterations = 4;
        c.train.sgd.learning_rate = 1e-4;
        c.checkpoint_interval = 2;
        c.apply_seed(77);
        std::ostringstream log;
        return cli::cmd_train(c, log);
    };
    const fs::path a = run("a");
    const fs::path b = run("b");
    bool identical = true;
    std::size_t files = 0;
    for (const char* f : {"checkpoint_000002.bin", "checkpoint_000004.bin", "final.bin", "train.log"}) {
        identical = identical && fs::exists(root / "a" / f) && slurp(root / "a" / f) == slurp(root / "b" / f);
        ++files;
    }

    // Round trip: bytes -> checkpoint -> bytes, and the tensors bit for bit.
    const std::string bytes = slurp(a);
    const Checkpoint ck = deserialize_checkpoint(bytes);
    bool round_trip = serialize_checkpoint(ck) == bytes;
    const Network net = Network::from_checkpoint(ck);
    const Checkpoint again = net.to_checkpoint();
    for (const auto& rec : again.records) {
        const NamedTensor* orig = ck.find_record(rec.name);
        round_trip = round_trip && orig && orig->tensor.shape() == rec.tensor.shape() &&
                     std::memcmp(orig->tensor.data().data(), rec.tensor.data().data(), rec.tensor.data().size_bytes()) == 0;
    }
    const fs::path copy = root / "copy.bin";
    write_checkpoint(copy, ck);
    round_trip = round_trip && slurp(copy) == bytes;
    fs::remove_all(root);
    const bool ok = identical && round_trip;
    return {ok, fmt("two seeded train runs (S=2, 4 iterations, batch 2): %zu artifacts %s; checkpoint of %zu bytes "
                    "round-trips %s",
                    files, identical ? "byte-identical" : "DIFFER", bytes.size(), round_trip ? "bit-exactly" : "with CHANGES")};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient suite", criterion_1},
        {"dilated conv conformance", criterion_2},
        {"summed-loss gradient degeneracy", criterion_3},
        {"SEM rate schedule", criterion_4},
        {"parameter counts", criterion_5},
        {"matcher oracle", criterion_6},
        {"evaluator sanity", criterion_7},
        {"toy overfit", criterion_8},
        {"scale specialization probe", criterion_9},
        {"determinism", criterion_10},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const int n = std::atoi(argv[i]);
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "usage: %s [criterion 1-%zu ...]\n", argv[0], criteria.size());
            return 2;
        }
        selected.push_back(n);
    }
    if (selected.empty()) {
        for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
    }
    int failures = 0;
    for (int n : selected) {
        const auto& [name, fn] = criteria[static_cast<std::size_t>(n - 1)];
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %d [%s] %s: %s\n", n, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
