#include "bdcn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <tuple>

#include "bdcn/errors.hpp"

namespace bdcn::eval {

namespace {

constexpr double kNmsMargin = 1.01;

// Separable [1 2 3 2 1] / 9 with replicated borders.
Map2D smooth_triangle(const Map2D& m) {
    static constexpr float k[5] = {1.0f / 9, 2.0f / 9, 3.0f / 9, 2.0f / 9, 1.0f / 9};
    auto clampi = [](std::int64_t v, std::int64_t hi) { return std::clamp<std::int64_t>(v, 0, hi - 1); };
    Map2D tmp(m.height, m.width);
    for (std::int64_t y = 0; y < m.height; ++y) {
        for (std::int64_t x = 0; x < m.width; ++x) {
            double acc = 0.0;
            for (int t = -2; t <= 2; ++t) acc += k[t + 2] * m(y, clampi(x + t, m.width));
            tmp(y, x) = static_cast<float>(acc);
        }
    }
    Map2D out(m.height, m.width);
    for (std::int64_t y = 0; y < m.height; ++y) {
        for (std::int64_t x = 0; x < m.width; ++x) {
            double acc = 0.0;
            for (int t = -2; t <= 2; ++t) acc += k[t + 2] * tmp(clampi(y + t, m.height), x);
            out(y, x) = static_cast<float>(acc);
        }
    }
    return out;
}

// Central differences inside, one-sided on the border.
Map2D diff_x(const Map2D& m) {
    Map2D out(m.height, m.width);
    if (m.width < 2) return out;
    for (std::int64_t y = 0; y < m.height; ++y) {
        out(y, 0) = m(y, 1) - m(y, 0);
        out(y, m.width - 1) = m(y, m.width - 1) - m(y, m.width - 2);
        for (std::int64_t x = 1; x + 1 < m.width; ++x) out(y, x) = 0.5f * (m(y, x + 1) - m(y, x - 1));
    }
    return out;
}

Map2D diff_y(const Map2D& m) {
    Map2D out(m.height, m.width);
    if (m.height < 2) return out;
    for (std::int64_t x = 0; x < m.width; ++x) {
        out(0, x) = m(1, x) - m(0, x);
        out(m.height - 1, x) = m(m.height - 1, x) - m(m.height - 2, x);
        for (std::int64_t y = 1; y + 1 < m.height; ++y) out(y, x) = 0.5f * (m(y + 1, x) - m(y - 1, x));
    }
    return out;
}

double sample_bilinear(const Map2D& m, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(m.height - 1));
    x = std::clamp(x, 0.0, static_cast<double>(m.width - 1));
    const auto y0 = static_cast<std::int64_t>(y);
    const auto x0 = static_cast<std::int64_t>(x);
    const std::int64_t y1 = std::min(y0 + 1, m.height - 1);
    const std::int64_t x1 = std::min(x0 + 1, m.width - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    return (m(y0, x0) * (1 - fx) + m(y0, x1) * fx) * (1 - fy) + (m(y1, x0) * (1 - fx) + m(y1, x1) * fx) * fy;
}

void require_same(const Map2D& a, const Map2D& b, const char* what) {
    if (!a.same_dims(b)) {
        throw UsageError(std::string(what) + ": dimension mismatch " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

double f_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

} // namespace

EdgeProbMap nms_thin(const EdgeProbMap& prob) {
    if (prob.size() == 0) return prob;
    const Map2D s = smooth_triangle(prob);
    const Map2D ox = diff_x(s);
    const Map2D oy = diff_y(s);
    const Map2D oxx = diff_x(ox);
    const Map2D oyy = diff_y(oy);
    const Map2D oxy = diff_y(ox);

    EdgeProbMap out = prob;
    for (std::int64_t y = 0; y < prob.height; ++y) {
        for (std::int64_t x = 0; x < prob.width; ++x) {
            const double e = prob(y, x);
            if (e <= 0.0) continue;
            const double a = oxx(y, x);
            const double b = oxy(y, x);
            const double c = oyy(y, x);
            // Eigenvector of the larger-magnitude Hessian eigenvalue.
            double theta = 0.5 * std::atan2(2.0 * b, a - c);
            if (a + c < 0.0) theta += 0.5 * std::numbers::pi;
            const double dx = std::cos(theta);
            const double dy = std::sin(theta);
            const double scaled = e * kNmsMargin;
            if (scaled < sample_bilinear(prob, y + dy, x + dx) || scaled < sample_bilinear(prob, y - dy, x - dx)) {
                out(y, x) = 0.0f;
            }
        }
    }
    return out;
}

Map2D binarize(const Map2D& m, double threshold) {
    Map2D out(m.height, m.width);
    for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] = m.values[i] >= threshold ? 1.0f : 0.0f;
    return out;
}

double match_radius(std::int64_t height, std::int64_t width, double tolerance) {
    return tolerance * std::hypot(static_cast<double>(height), static_cast<double>(width));
}

MatchCounts match_edges(const Map2D& pred_binary, const Map2D& gt_binary, double tolerance) {
    require_same(pred_binary, gt_binary, "match_edges");
    if (!(tolerance > 0.0)) throw UsageError("match_edges: tolerance must be positive");
    const std::int64_t h = pred_binary.height;
    const std::int64_t w = pred_binary.width;
    const double radius = match_radius(h, w, tolerance);
    const double r2 = radius * radius;
    const auto reach = static_cast<std::int64_t>(std::floor(radius));

    // (squared distance, smaller pixel index, larger pixel index, pred index, gt index)
    using Pair = std::tuple<std::int64_t, std::int64_t, std::int64_t, std::int64_t, std::int64_t>;
    std::vector<Pair> pairs;
    std::int64_t n_pred = 0;
    std::int64_t n_gt = 0;
    for (float v : gt_binary.values) n_gt += v != 0.0f;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            if (pred_binary(y, x) == 0.0f) continue;
            ++n_pred;
            const std::int64_t pi = y * w + x;
            for (std::int64_t dy = -reach; dy <= reach; ++dy) {
                const std::int64_t gy = y + dy;
                if (gy < 0 || gy >= h) continue;
                for (std::int64_t dx = -reach; dx <= reach; ++dx) {
                    const std::int64_t gx = x + dx;
                    if (gx < 0 || gx >= w || gt_binary(gy, gx) == 0.0f) continue;
                    const std::int64_t d2 = dy * dy + dx * dx;
                    if (static_cast<double>(d2) > r2) continue;
                    const std::int64_t gi = gy * w + gx;
                    pairs.emplace_back(d2, std::min(pi, gi), std::max(pi, gi), pi, gi);
                }
            }
        }
    }
    std::sort(pairs.begin(), pairs.end());

    // Compact ids, and per-prediction candidate lists in the sorted order.
    std::vector<std::int32_t> pred_id(static_cast<std::size_t>(h * w), -1);
    std::vector<std::int32_t> gt_id(static_cast<std::size_t>(h * w), -1);
    std::int32_t np = 0;
    std::int32_t ng = 0;
    for (const auto& pr : pairs) {
        auto& a = pred_id[static_cast<std::size_t>(std::get<3>(pr))];
        if (a < 0) a = np++;
        auto& b = gt_id[static_cast<std::size_t>(std::get<4>(pr))];
        if (b < 0) b = ng++;
    }
    std::vector<std::size_t> start(static_cast<std::size_t>(np) + 1, 0);
    for (const auto& pr : pairs) ++start[static_cast<std::size_t>(pred_id[static_cast<std::size_t>(std::get<3>(pr))]) + 1];
    for (std::size_t i = 1; i < start.size(); ++i) start[i] += start[i - 1];
    std::vector<std::int32_t> adj(pairs.size());
    {
        std::vector<std::size_t> fill(start.begin(), start.end() - 1);
        for (const auto& pr : pairs) {
            const auto p = static_cast<std::size_t>(pred_id[static_cast<std::size_t>(std::get<3>(pr))]);
            adj[fill[p]++] = gt_id[static_cast<std::size_t>(std::get<4>(pr))];
        }
    }

    std::vector<std::int32_t> match_p(static_cast<std::size_t>(np), -1);
    std::vector<std::int32_t> match_g(static_cast<std::size_t>(ng), -1);
    MatchCounts c;
    for (const auto& pr : pairs) {
        const auto p = static_cast<std::size_t>(pred_id[static_cast<std::size_t>(std::get<3>(pr))]);
        const auto g = static_cast<std::size_t>(gt_id[static_cast<std::size_t>(std::get<4>(pr))]);
        if (match_p[p] >= 0 || match_g[g] >= 0) continue;
        match_p[p] = static_cast<std::int32_t>(g);
        match_g[g] = static_cast<std::int32_t>(p);
        ++c.tp;
    }

    // The greedy pass can strand pixels: a run shifted along itself matches at
    // distance 0 inside and leaves both ends over. Augmenting paths through
    // admissible pairs recover them, so tp is the largest possible.
    std::vector<char> seen(static_cast<std::size_t>(ng));
    std::vector<std::pair<std::int32_t, std::size_t>> stack;
    auto augment = [&](std::int32_t root) {
        stack.assign(1, {root, start[static_cast<std::size_t>(root)]});
        while (!stack.empty()) {
            auto& [p, e] = stack.back();
            if (e == start[static_cast<std::size_t>(p) + 1]) {
                stack.pop_back();
                continue;
            }
            const std::int32_t g = adj[e++];
            if (seen[static_cast<std::size_t>(g)]) continue;
            seen[static_cast<std::size_t>(g)] = 1;
            const std::int32_t owner = match_g[static_cast<std::size_t>(g)];
            if (owner >= 0) {
                stack.emplace_back(owner, start[static_cast<std::size_t>(owner)]);
                continue;
            }
            for (const auto& [fp, fe] : stack) {
                const std::int32_t fg = adj[fe - 1];
                match_p[static_cast<std::size_t>(fp)] = fg;
                match_g[static_cast<std::size_t>(fg)] = fp;
            }
            return true;
        }
        return false;
    };
    for (bool grew = true; grew;) {
        grew = false;
        std::fill(seen.begin(), seen.end(), 0);
        for (std::int32_t p = 0; p < np; ++p) {
            if (match_p[static_cast<std::size_t>(p)] < 0 && augment(p)) {
                ++c.tp;
                grew = true;
            }
        }
    }
    c.fp = n_pred - c.tp;
    c.fn = n_gt - c.tp;
    return c;
}

std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 1; i <= 99; ++i) t.push_back(i / 100.0);
    return t;
}

SweepResult sweep_thresholds(std::span<const EdgeProbMap> probs, std::span<const Map2D> gt_masks,
                             std::span<const double> thresholds, double tolerance) {
    if (probs.empty()) throw UsageError("sweep_thresholds: empty dataset");
    if (probs.size() != gt_masks.size()) throw UsageError("sweep_thresholds: prediction/ground-truth count mismatch");
    if (thresholds.empty()) throw UsageError("sweep_thresholds: no thresholds");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) {
            throw UsageError("sweep_thresholds: thresholds must lie strictly inside (0, 1)");
        }
        if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
            throw UsageError("sweep_thresholds: thresholds must be strictly ascending");
        }
    }
    SweepResult out;
    out.thresholds.assign(thresholds.begin(), thresholds.end());
    out.per_image.resize(probs.size());
    for (std::size_t im = 0; im < probs.size(); ++im) {
        require_same(probs[im], gt_masks[im], "sweep_thresholds");
        auto& row = out.per_image[im];
        row.reserve(thresholds.size());
        for (double t : thresholds) row.push_back(match_edges(binarize(probs[im], t), gt_masks[im], tolerance));
    }
    return out;
}

PRPoint make_point(double threshold, const MatchCounts& c) {
    PRPoint p;
    p.threshold = threshold;
    p.tp = c.tp;
    p.fp = c.fp;
    p.fn = c.fn;
    p.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 1.0;
    p.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 1.0;
    p.f_measure = f_of(p.precision, p.recall);
    return p;
}

EvalSummary summarize(const SweepResult& sweep) {
    if (sweep.per_image.empty() || sweep.thresholds.empty()) throw UsageError("summarize: empty sweep");
    EvalSummary s;
    const std::size_t nt = sweep.thresholds.size();
    for (std::size_t t = 0; t < nt; ++t) {
        MatchCounts agg;
        for (const auto& row : sweep.per_image) agg += row.at(t);
        s.curve.push_back(make_point(sweep.thresholds[t], agg));
        if (t == 0 || s.curve.back().f_measure > s.ods_f) {
            s.ods_f = s.curve.back().f_measure;
            s.ods_threshold = sweep.thresholds[t];
        }
    }

    MatchCounts ois;
    for (const auto& row : sweep.per_image) {
        ImageBest best;
        for (std::size_t t = 0; t < nt; ++t) {
            const PRPoint p = make_point(sweep.thresholds[t], row.at(t));
            if (t == 0 || p.f_measure > best.f_measure) best = {p.threshold, p.f_measure, row[t]};
        }
        ois += best.counts;
        s.per_image.push_back(best);
    }
    s.ois_f = make_point(0.0, ois).f_measure;

    std::vector<std::pair<double, double>> rp;
    for (const auto& p : s.curve) rp.emplace_back(p.recall, p.precision);
    std::sort(rp.begin(), rp.end(), [](const auto& a, const auto& b) {
        return a.first < b.first || (a.first == b.first && a.second > b.second);
    });
    double area = rp.front().first * rp.front().second;
    for (std::size_t i = 1; i < rp.size(); ++i) {
        area += (rp[i].first - rp[i - 1].first) * 0.5 * (rp[i].second + rp[i - 1].second);
    }
    s.ap = std::clamp(area, 0.0, 1.0);
    return s;
}

Map2D gt_mask(const Map2D& consensus) { return binarize(consensus, 0.5); }

EvalSummary evaluate(std::span<const EdgeProbMap> probs, std::span<const Map2D> gt_masks, double tolerance,
                     bool thin) {
    std::vector<EdgeProbMap> maps;
    maps.reserve(probs.size());
    for (const auto& p : probs) maps.push_back(thin ? nms_thin(p) : p);
    const auto thresholds = default_thresholds();
    return summarize(sweep_thresholds(maps, gt_masks, thresholds, tolerance));
}

std::string pr_csv(const EvalSummary& s) {
    std::ostringstream os;
    os << "threshold,tp,fp,fn,precision,recall,f_measure\n";
    for (const auto& p : s.curve) {
        os << fmt4(p.threshold) << ',' << p.tp << ',' << p.fp << ',' << p.fn << ',' << fmt4(p.precision) << ','
           << fmt4(p.recall) << ',' << fmt4(p.f_measure) << '\n';
    }
    return os.str();
}

std::string summary_text(const EvalSummary& s) {
    return "ODS: " + fmt4(s.ods_f) + "\nOIS: " + fmt4(s.ois_f) + "\nAP: " + fmt4(s.ap) + "\n";
}

std::string per_image_csv(const EvalSummary& s, std::span<const std::string> ids) {
    std::ostringstream os;
    os << "id,best_threshold,best_f\n";
    for (std::size_t i = 0; i < s.per_image.size(); ++i) {
        os << (i < ids.size() ? ids[i] : std::to_string(i)) << ',' << fmt4(s.per_image[i].threshold) << ','
           << fmt4(s.per_image[i].f_measure) << '\n';
    }
    return os.str();
}

} // namespace bdcn::eval
