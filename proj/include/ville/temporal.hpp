#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ville/errors.hpp"

namespace ville {

using Span = std::pair<double, double>;  // [start_s, end_s)

// Intersection-over-union of two intervals; zero-length union counts as 0.
double interval_iou(const Span& a, const Span& b);

struct WindowConfig {
    double window_s = 10.0;
    double stride_s = 5.0;
};

// Sliding-window grid: full windows start at i*stride while start+window fits
// inside the duration; if they don't reach the end, one tail window is
// clamped to [next_start, duration]. duration 60 / window 10 / stride 5
// yields starts 0,5,...,50 — eleven windows, no tail.
std::vector<Span> window_clips(double duration_s, const WindowConfig& cfg);

struct SeedMergeParams {
    double tau_merge = 0.4;  // absolute score floor for joining a neighbor
    double alpha = 0.5;      // ...or relative to the seed's score
};

struct MergedSpan {
    double start_s = 0;
    double end_s = 0;
    int64_t seed_index = -1;
    int64_t first_index = -1;  // leftmost merged window
    int64_t last_index = -1;   // rightmost merged window
    double seed_score = 0;
};

// Take the best-scoring window as the seed (ties: lowest index), grow over
// contiguous neighbors while s_i >= tau_merge or s_i >= alpha * seed score,
// stopping each side at its first failure. Boundary windows other than the
// seed are then trimmed by stride/2 on their outward side (clamped so the
// span never shrinks past the seed window itself).
MergedSpan seed_merge(const std::vector<double>& scores, const std::vector<Span>& windows,
                      const SeedMergeParams& params, double stride_s);

}  // namespace ville
