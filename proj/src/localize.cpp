#include "ville/localize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ville {

std::vector<double> window_scores(Model& model, const SyntheticVideo& video,
                                  const std::vector<int64_t>& query_tokens,
                                  const std::vector<Span>& windows, const LocalizeConfig& cfg,
                                  double fps) {
    EmbeddingVector q = embed_contextual_text(model.backbone, model.head,
                                              sparse_frames(video, cfg.sparse_ctx_frames),
                                              query_tokens);
    std::vector<double> scores;
    scores.reserve(windows.size());
    for (const Span& w : windows) {
        EmbeddingVector e = embed_video(model.backbone, model.head,
                                        frames_in_span(video, w, fps), cfg.embed);
        double dot = 0;
        for (size_t i = 0; i < q.values.size(); ++i) dot += q.values[i] * e.values[i];
        scores.push_back(dot);
    }
    return scores;
}

std::vector<MomentPrediction> localize(Model& model, const SyntheticVideo& video,
                                       const std::vector<int64_t>& query_tokens,
                                       const LocalizeConfig& cfg, double fps) {
    if (cfg.top_n < 1) throw ArgumentError("localize: top_n must be >= 1");
    std::vector<Span> windows = window_clips(video.duration_s, cfg.window);
    std::vector<double> scores = window_scores(model, video, query_tokens, windows, cfg, fps);

    constexpr double kMasked = -std::numeric_limits<double>::infinity();
    std::vector<MomentPrediction> out;
    std::vector<double> work = scores;
    for (int64_t n = 0; n < cfg.top_n; ++n) {
        if (std::all_of(work.begin(), work.end(), [](double s) { return s == kMasked; })) break;
        MergedSpan m = seed_merge(work, windows, cfg.merge, cfg.window.stride_s);
        MomentPrediction p;
        p.video_id = video.id;
        p.start_s = std::max(0.0, m.start_s);
        p.end_s = std::min(video.duration_s, m.end_s);
        p.score = m.seed_score;
        out.push_back(p);
        for (int64_t i = m.first_index; i <= m.last_index; ++i)
            work[static_cast<size_t>(i)] = kMasked;
    }
    return out;
}

}  // namespace ville
