#pragma once

#include <string>
#include <vector>

#include "ville/checkpoint.hpp"
#include "ville/corpus.hpp"
#include "ville/model.hpp"
#include "ville/optimizer.hpp"

namespace ville {

struct TaskWeights {
    double cap = 1.0, qa = 1.0, ret = 1.0, match = 1.0, loc = 1.0;
};

struct StageConfig {
    int64_t stage = 1;  // 1|2: joint caption+retrieval; 3: multitask
    int64_t steps = 200;
    double base_lr = 3e-3;
    int64_t warmup_steps = 20;
    int64_t grad_accum = 1;
    int64_t adapter_rank = 8;  // stages 1-2 default 8; stage 3 overridden to 4 by config layer
    double adapter_scale = 1.0;
    int64_t batch_size = 8;    // caption/retrieval pairs per micro-batch
    int64_t qa_batch = 4;
    int64_t match_batch = 4;
    int64_t loc_batch = 2;
    double composed_fraction = 0.25;  // share of stage-3 retrieval rows drawn from twins
    TaskWeights weights;
    std::string optimizer = "adamw";
    double weight_decay = 0.01;  // decoupled; hits only decay-tagged params (the head)
    bool freeze_base = false;
    bool symmetric_ret = false;
    int64_t fixed_embed_tokens = 0;  // 0 = adaptive
    int64_t sparse_ctx_frames = 8;   // frames kept for contextual-text prompts
    WindowConfig loc_windows;        // mining grid for hard negatives

    void validate() const;
};

// What one micro-batch contributed, scalar-level. Absent tasks keep has_* false.
struct StepLosses {
    double cap = 0, qa = 0, ret = 0, match = 0, loc = 0;  // cap/qa are per-token
    bool has_cap = false, has_qa = false, has_ret = false, has_match = false, has_loc = false;
    double total = 0;          // the weighted scalar that was backpropagated
    int64_t loc_dropped = 0;   // samples lost to mining failures
    int64_t ret_skipped = 0;   // 1 when the batch was too small for in-batch negatives
    int64_t renorm_warnings = 0;

    void add(const StepLosses& o);
    void scale_by(double f);
};

// Stage-3 task minibatches, all indices into the corpus.
struct RetEntry {
    int64_t video = -1;     // positive video (teacher-forced embedding)
    int64_t composed = -1;  // >= 0: corpus.composed index; query = source frames + change text
};
struct MatchEntry {
    int64_t video = 0;
    int64_t caption_video = 0;  // == video for positives
    bool positive = true;
};
struct MultitaskBatch {
    std::vector<int64_t> cap;  // video ids
    std::vector<int64_t> qa;   // corpus.qa indices
    std::vector<RetEntry> ret;
    std::vector<MatchEntry> match;
    std::vector<int64_t> loc;  // corpus.loc indices

    bool empty() const {
        return cap.empty() && qa.empty() && ret.empty() && match.empty() && loc.empty();
    }
};

MultitaskBatch make_multitask_batch(const Corpus& corpus, const StageConfig& cfg, Rng& rng);

// One micro-batch: forward + backward, gradients left accumulated on the
// parameters. Pass 1 couples captioning with the teacher-forced video
// embedding; pass 2 embeds the bare captions; one InfoNCE ties them.
StepLosses stage12_step(Model& model, const Corpus& corpus, const std::vector<int64_t>& video_ids,
                        const StageConfig& cfg);

// Multitask micro-batch: per-task losses summed with weights, one backward.
StepLosses stage3_step(Model& model, const Corpus& corpus, const MultitaskBatch& batch,
                       const StageConfig& cfg, Rng& mine_rng);

struct RunStageResult {
    std::string checkpoint_path;
    std::string log_path;
    std::vector<StepLosses> log;  // one entry per optimizer update (micro-batch mean)
    int64_t updates = 0;
};

// Full stage loop: fresh adapters at the configured rank, grad_accum
// micro-batches per update, warmup schedule, JSONL step log, adapters merged
// back into the base before the final checkpoint is written.
RunStageResult run_stage(Model& model, const Corpus& corpus, const StageConfig& cfg,
                         const std::string& out_dir, uint64_t seed);

}  // namespace ville
