#include "ville/metrics.hpp"

#include <algorithm>

namespace ville {

namespace {

int64_t rank_of_truth(const RetrievalResult& r, const std::map<std::string, std::string>& truth) {
    auto it = truth.find(r.query_id);
    if (it == truth.end()) throw DataError("metrics: no truth for query '" + r.query_id + "'");
    for (size_t i = 0; i < r.ranked.size(); ++i)
        if (r.ranked[i] == it->second) return static_cast<int64_t>(i) + 1;
    return static_cast<int64_t>(r.ranked.size()) + 1;
}

}  // namespace

double recall_at_k(const std::vector<RetrievalResult>& results,
                   const std::map<std::string, std::string>& truth, int64_t k) {
    if (k < 1) throw ArgumentError("recall_at_k: k must be >= 1");
    if (results.empty()) throw ArgumentError("recall_at_k: no results");
    int64_t hits = 0;
    for (const auto& r : results) {
        int64_t rank = rank_of_truth(r, truth);
        // an absent truth (sentinel rank len+1) is a miss at every k
        if (rank <= k && rank <= static_cast<int64_t>(r.ranked.size())) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

double median_rank(const std::vector<RetrievalResult>& results,
                   const std::map<std::string, std::string>& truth) {
    if (results.empty()) throw ArgumentError("median_rank: no results");
    std::vector<int64_t> ranks;
    ranks.reserve(results.size());
    for (const auto& r : results) ranks.push_back(rank_of_truth(r, truth));
    std::sort(ranks.begin(), ranks.end());
    return static_cast<double>(ranks[(ranks.size() - 1) / 2]);
}

namespace {

double best_iou(const MomentPrediction& p, const std::vector<Span>& truth) {
    double best = 0;
    for (const Span& t : truth) best = std::max(best, interval_iou({p.start_s, p.end_s}, t));
    return best;
}

// AP for one query at one threshold: predictions in score order greedily
// claim the first unmatched truth they clear; AP = mean over truths of the
// precision at each hit.
double average_precision(const MomentResult& r, double threshold) {
    if (r.truth.empty()) throw DataError("moment metrics: empty truth for '" + r.query_id + "'");
    std::vector<MomentPrediction> preds = r.predictions;
    std::stable_sort(preds.begin(), preds.end(),
                     [](const MomentPrediction& a, const MomentPrediction& b) {
                         return a.score > b.score;
                     });
    std::vector<bool> claimed(r.truth.size(), false);
    int64_t hits = 0;
    double ap = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        for (size_t t = 0; t < r.truth.size(); ++t) {
            if (claimed[t]) continue;
            if (interval_iou({preds[i].start_s, preds[i].end_s}, r.truth[t]) >= threshold) {
                claimed[t] = true;
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(i + 1);
                break;
            }
        }
    }
    return ap / static_cast<double>(r.truth.size());
}

}  // namespace

double moment_recall_at_iou(const std::vector<MomentResult>& results, double threshold) {
    if (results.empty()) throw ArgumentError("moment_recall: no results");
    int64_t hits = 0;
    for (const auto& r : results) {
        if (r.truth.empty()) throw DataError("moment metrics: empty truth for '" + r.query_id + "'");
        if (!r.predictions.empty() && best_iou(r.predictions.front(), r.truth) >= threshold)
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

double moment_map(const std::vector<MomentResult>& results, const std::vector<double>& thresholds) {
    if (results.empty()) throw ArgumentError("moment_map: no results");
    if (thresholds.empty()) throw ArgumentError("moment_map: no thresholds");
    double total = 0;
    for (double thr : thresholds) {
        double sum = 0;
        for (const auto& r : results) sum += average_precision(r, thr);
        total += sum / static_cast<double>(results.size());
    }
    return total / static_cast<double>(thresholds.size());
}

double random_window_baseline(const std::vector<MomentResult>& results, const WindowConfig& wcfg,
                              double threshold) {
    if (results.empty()) throw ArgumentError("random_window_baseline: no results");
    double total = 0;
    for (const auto& r : results) {
        std::vector<Span> windows = window_clips(r.duration_s, wcfg);
        int64_t good = 0;
        for (const Span& w : windows) {
            for (const Span& t : r.truth) {
                if (interval_iou(w, t) >= threshold) {
                    ++good;
                    break;
                }
            }
        }
        total += static_cast<double>(good) / static_cast<double>(windows.size());
    }
    return total / static_cast<double>(results.size());
}

std::pair<int64_t, int64_t> oracle_seed_merge(const std::vector<double>& scores, double tau_merge,
                                              double alpha) {
    if (scores.empty()) throw ArgumentError("oracle_seed_merge: empty scores");
    int64_t n = static_cast<int64_t>(scores.size());
    int64_t seed = 0;
    for (int64_t i = 1; i < n; ++i)
        if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(seed)]) seed = i;

    double s_seed = scores[static_cast<size_t>(seed)];
    int64_t lo = seed;
    while (lo - 1 >= 0) {
        double s = scores[static_cast<size_t>(lo - 1)];
        bool passes_absolute = s >= tau_merge;
        bool passes_relative = s >= alpha * s_seed;
        if (!passes_absolute && !passes_relative) break;
        --lo;
    }
    int64_t hi = seed;
    while (hi + 1 < n) {
        double s = scores[static_cast<size_t>(hi + 1)];
        bool passes_absolute = s >= tau_merge;
        bool passes_relative = s >= alpha * s_seed;
        if (!passes_absolute && !passes_relative) break;
        ++hi;
    }
    return {lo, hi};
}

}  // namespace ville
