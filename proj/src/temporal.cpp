#include "ville/temporal.hpp"

#include <algorithm>
#include <cmath>

namespace ville {

double interval_iou(const Span& a, const Span& b) {
    if (a.second < a.first || b.second < b.first)
        throw ArgumentError("interval_iou: end before start");
    double inter = std::min(a.second, b.second) - std::max(a.first, b.first);
    if (inter <= 0) return 0.0;
    double uni = std::max(a.second, b.second) - std::min(a.first, b.first);
    if (uni <= 0) return 0.0;
    return inter / uni;
}

std::vector<Span> window_clips(double duration_s, const WindowConfig& cfg) {
    if (duration_s <= 0) throw ArgumentError("window_clips: non-positive duration");
    if (cfg.window_s <= 0 || cfg.stride_s <= 0)
        throw ArgumentError("window_clips: window and stride must be positive");
    std::vector<Span> out;
    int64_t i = 0;
    while (true) {
        double start = static_cast<double>(i) * cfg.stride_s;
        if (start + cfg.window_s > duration_s) break;
        out.push_back({start, start + cfg.window_s});
        ++i;
    }
    double covered = out.empty() ? 0.0 : out.back().second;
    if (covered < duration_s) {
        double start = static_cast<double>(i) * cfg.stride_s;
        out.push_back({start, duration_s});
    }
    return out;
}

MergedSpan seed_merge(const std::vector<double>& scores, const std::vector<Span>& windows,
                      const SeedMergeParams& params, double stride_s) {
    if (scores.empty()) throw ArgumentError("seed_merge: no windows");
    if (scores.size() != windows.size())
        throw ShapeError("seed_merge: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(windows.size()) + " windows");
    if (stride_s <= 0) throw ArgumentError("seed_merge: stride must be positive");

    int64_t n = static_cast<int64_t>(scores.size());
    int64_t seed = 0;
    for (int64_t i = 1; i < n; ++i)
        if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(seed)]) seed = i;

    double s_seed = scores[static_cast<size_t>(seed)];
    auto joins = [&](int64_t i) {
        double s = scores[static_cast<size_t>(i)];
        return s >= params.tau_merge || s >= params.alpha * s_seed;
    };
    int64_t lo = seed;
    while (lo > 0 && joins(lo - 1)) --lo;
    int64_t hi = seed;
    while (hi + 1 < n && joins(hi + 1)) ++hi;

    MergedSpan out;
    out.seed_index = seed;
    out.first_index = lo;
    out.last_index = hi;
    out.seed_score = s_seed;
    out.start_s = windows[static_cast<size_t>(lo)].first;
    out.end_s = windows[static_cast<size_t>(hi)].second;
    // Center correction: merged neighbors overshoot the true boundary by half
    // a stride on average, so trim non-seed edges inward, never past the seed.
    if (lo < seed)
        out.start_s = std::min(out.start_s + stride_s / 2.0, windows[static_cast<size_t>(seed)].first);
    if (hi > seed)
        out.end_s = std::max(out.end_s - stride_s / 2.0, windows[static_cast<size_t>(seed)].second);
    return out;
}

}  // namespace ville
