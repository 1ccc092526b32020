#pragma once

#include "ville/config.hpp"
#include "ville/localize.hpp"
#include "ville/metrics.hpp"
#include "ville/report.hpp"
#include "ville/retrieval.hpp"

namespace ville {

// ---- building blocks shared by the CLI commands and the test harnesses ----

Corpus ensure_corpus(const RunConfig& cfg);  // loads <out>/corpus, explicit error if absent
Model build_model(const RunConfig& cfg, Rng& rng);

// newest checkpoint at or below `upto_stage` under <out>/train, "" if none
std::string latest_checkpoint(const std::string& out_dir, int64_t upto_stage = 3);

// Inference-path video embeddings for the given corpus ids.
EmbeddingIndex build_video_index(Model& model, const Corpus& corpus,
                                 const std::vector<int64_t>& ids, const EmbedOptions& opt,
                                 std::vector<int64_t>* token_counts = nullptr);

struct RetrievalMetrics {
    double t2v_r1 = 0, t2v_r5 = 0, t2v_r10 = 0, t2v_mdr = 0;
    double v2t_r1 = 0, v2t_r5 = 0, v2t_r10 = 0, v2t_mdr = 0;
};
RetrievalMetrics eval_retrieval(Model& model, const Corpus& corpus,
                                const std::vector<int64_t>& gallery, const EmbedOptions& opt);

struct LocalizationEval {
    double r1_iou50 = 0;
    double map = 0;
    double mean_iou = 0;
    double random_baseline = 0;  // same grid, analytic
    std::vector<MomentResult> results;
};
LocalizationEval eval_localization(Model& model, const Corpus& corpus, const LocalizeConfig& cfg,
                                   double fps, int64_t max_queries = -1);

struct RerankEval {
    double first_r1 = 0, first_r5 = 0;
    double rerank_r1 = 0, rerank_r5 = 0;
};
RerankEval eval_rerank(Model& model, const Corpus& corpus, const std::vector<int64_t>& gallery,
                       int64_t K, const EmbedOptions& opt);

struct ComposedEval {
    double r1 = 0, r5 = 0;
    double random_r1 = 0;  // 1 / gallery size
    int64_t n_queries = 0;
    int64_t gallery_size = 0;
};
ComposedEval eval_composed(Model& model, const Corpus& corpus, const EmbedOptions& opt,
                           int64_t sparse_ctx_frames);

struct GenerativeEval {
    double caption_nll = 0;  // per-token, held-out captions
    double qa_accuracy = 0;  // exact-match greedy decoding
    int64_t n_captions = 0;
    int64_t n_qa = 0;
};
GenerativeEval eval_generative(Model& model, const Corpus& corpus,
                               const std::vector<int64_t>& ids);

// ---- command bodies; they throw, the CLI maps exceptions to exit codes ----

void cmd_gen_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, int64_t stage, bool from_scratch);
void cmd_embed(const RunConfig& cfg, const std::string& split);  // train|holdout|all
void cmd_retrieve(const RunConfig& cfg);
void cmd_localize(const RunConfig& cfg);
void cmd_rerank(const RunConfig& cfg);
void cmd_compose(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg, const std::string& axis);
void cmd_report(const RunConfig& cfg);

}  // namespace ville
