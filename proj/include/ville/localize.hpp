#pragma once

#include "ville/corpus.hpp"
#include "ville/model.hpp"
#include "ville/temporal.hpp"

namespace ville {

struct MomentPrediction {
    std::string video_id;
    double start_s = 0;
    double end_s = 0;
    double score = 0;  // seed window similarity
};

struct LocalizeConfig {
    WindowConfig window;
    SeedMergeParams merge;
    int64_t top_n = 1;            // >1: repeat seed-merge on masked scores
    int64_t sparse_ctx_frames = 8;
    EmbedOptions embed;
};

// Cosine of the query embedding against each window clip's video embedding.
// Query = contextual text (sparse full-video frames + text); windows are
// embedded with genuine generation (inference path).
std::vector<double> window_scores(Model& model, const SyntheticVideo& video,
                                  const std::vector<int64_t>& query_tokens,
                                  const std::vector<Span>& windows, const LocalizeConfig& cfg,
                                  double fps);

// Full pipeline: enumerate windows, score, seed-merge, center-correct.
// Returns cfg.top_n predictions (fewer if the grid is exhausted), best first.
std::vector<MomentPrediction> localize(Model& model, const SyntheticVideo& video,
                                       const std::vector<int64_t>& query_tokens,
                                       const LocalizeConfig& cfg, double fps);

}  // namespace ville
