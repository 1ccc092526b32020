#pragma once

#include <string>

#include "ville/corpus.hpp"
#include "ville/model.hpp"
#include "ville/trainer.hpp"

namespace ville {

// Everything one run needs, in one document. Unknown keys are rejected with
// their dotted path; every field has a default; precedence is
// CLI > environment (VILLE_SEED / VILLE_OUT) > file > default.
struct RunConfig {
    uint64_t seed = 7;
    std::string out = "out";
    CorpusConfig corpus;
    ModelConfig model;
    StageConfig stage1, stage2, stage3;
    WindowConfig window;      // inference window grid
    SeedMergeParams merge;
    EmbedOptions embed;       // generation budget / fixed-token ablation
    int64_t retrieval_k = 10;
    int64_t rerank_k = 25;    // first-stage candidates passed to the matcher
    int64_t loc_top_n = 1;
    int64_t sparse_ctx_frames = 8;

    void validate() const;
};

RunConfig default_run_config();

// Parse + strict-merge over defaults. Throws ConfigError naming the dotted
// path of any unknown key or type mismatch.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text, const std::string& origin);

// Full effective document, defaults merged, stable key order.
std::string run_config_echo(const RunConfig& cfg);

// VILLE_SEED / VILLE_OUT, applied between file and CLI layers.
void apply_env_overrides(RunConfig& cfg);

// The model document leaves vocab_size/d_frame at 0 = "derive from corpus";
// this fills them in and mirrors d_model/dtype into the head config.
ModelConfig resolved_model(const RunConfig& cfg);

}  // namespace ville
