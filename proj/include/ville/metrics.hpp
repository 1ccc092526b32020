#pragma once

#include <map>
#include <string>
#include <vector>

#include "ville/localize.hpp"

namespace ville {

struct RetrievalResult {
    std::string query_id;
    std::vector<std::string> ranked;  // candidate ids, best first, no duplicates
};

// Fraction of queries whose truth id appears in the top k. Every query must
// have a truth entry.
double recall_at_k(const std::vector<RetrievalResult>& results,
                   const std::map<std::string, std::string>& truth, int64_t k);

// Median of the 1-based rank of the truth id (absent = |ranked|+1). Even
// count takes the lower middle, keeping the statistic integral.
double median_rank(const std::vector<RetrievalResult>& results,
                   const std::map<std::string, std::string>& truth);

struct MomentResult {
    std::string query_id;
    std::vector<MomentPrediction> predictions;  // score-ranked, best first
    std::vector<Span> truth;                    // nonempty
    double duration_s = 0;
};

// Fraction of queries whose top prediction reaches IoU >= threshold with any
// truth span.
double moment_recall_at_iou(const std::vector<MomentResult>& results, double threshold = 0.5);

// Average precision per IoU threshold (greedy truth matching over
// score-ranked predictions), averaged over queries then thresholds.
double moment_map(const std::vector<MomentResult>& results,
                  const std::vector<double>& thresholds = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8,
                                                           0.85, 0.9, 0.95});

// Chance rate of the same window grid: for each query, the fraction of
// enumerated windows whose IoU with some truth span clears the threshold,
// averaged over queries. This is the exact expectation of picking one window
// uniformly at random.
double random_window_baseline(const std::vector<MomentResult>& results, const WindowConfig& wcfg,
                              double threshold = 0.5);

// Independent transcription of the seed-and-merge rules, kept free of any
// shared code with the production implementation so the two can be fuzzed
// against each other. Returns the inclusive merged index range.
std::pair<int64_t, int64_t> oracle_seed_merge(const std::vector<double>& scores, double tau_merge,
                                              double alpha);

}  // namespace ville
