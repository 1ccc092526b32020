#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "test_support.hpp"
#include "ville/checkpoint.hpp"
#include "ville/io.hpp"
#include "ville/pipeline.hpp"

using namespace ville;
using namespace ville::testing;
namespace fs = std::filesystem;

namespace {

// Every knob shrunk until a full gen-data + train + embed cycle stays in the
// low seconds on one core.
RunConfig micro_config(const std::string& out) {
    RunConfig c = default_run_config();
    c.out = out;
    c.seed = 5;
    c.corpus.n_videos = 10;
    c.corpus.n_symbols = 5;
    c.corpus.d_frame = 4;
    c.corpus.fps = 1.0;
    c.corpus.duration_min_s = 8.0;
    c.corpus.duration_max_s = 14.0;
    c.corpus.min_events = 1;
    c.corpus.max_events = 2;
    c.corpus.event_min_s = 2.0;
    c.corpus.event_max_s = 4.0;
    c.corpus.gap_min_s = 0.5;
    c.corpus.gap_max_s = 2.0;
    c.corpus.twin_fraction = 0.2;
    c.corpus.holdout = 3;
    c.model.backbone.d_model = 16;
    c.model.backbone.n_layers = 1;
    c.model.backbone.n_heads = 2;
    c.model.backbone.max_seq = 64;
    c.model.head.pooling_tokens = 4;
    c.model.head.mlp_hidden = 8;
    c.model.head.d_embed = 6;
    for (StageConfig* s : {&c.stage1, &c.stage2, &c.stage3}) {
        s->steps = 2;
        s->warmup_steps = 1;
        s->batch_size = 2;
        s->qa_batch = 1;
        s->match_batch = 2;
        s->loc_batch = 1;
        s->adapter_rank = 2;
        s->loc_windows.window_s = 4.0;
        s->loc_windows.stride_s = 2.0;
    }
    c.window.window_s = 4.0;
    c.window.stride_s = 2.0;
    c.embed.max_steps = 5;
    return c;
}

}  // namespace

TEST_CASE("gen-data is deterministic and embeds see what it wrote") {
    TempDir a("pipe_gen_a"), b("pipe_gen_b");
    RunConfig ca = micro_config(a.path());
    RunConfig cb = micro_config(b.path());

    cmd_gen_data(ca);
    cmd_gen_data(cb);
    CHECK(corpus_checksum(a.path() + "/corpus") == corpus_checksum(b.path() + "/corpus"));
    CHECK(fs::exists(a.path() + "/config_echo.json"));

    SUBCASE("a different seed lands elsewhere") {
        TempDir c("pipe_gen_c");
        RunConfig cc = micro_config(c.path());
        cc.seed = 6;
        cmd_gen_data(cc);
        CHECK(corpus_checksum(c.path() + "/corpus") != corpus_checksum(a.path() + "/corpus"));
    }
}

TEST_CASE("inference commands refuse to run before their inputs exist") {
    TempDir dir("pipe_guards");
    RunConfig cfg = micro_config(dir.path());

    // no corpus yet
    CHECK_THROWS_AS(cmd_train(cfg, 1, false), DataError);
    CHECK_THROWS_AS(cmd_embed(cfg, "holdout"), DataError);

    cmd_gen_data(cfg);
    // stage 2 needs the stage-1 checkpoint unless explicitly skipped
    CHECK_THROWS_AS(cmd_train(cfg, 2, false), ConfigError);
    CHECK_THROWS_AS(cmd_train(cfg, 0, false), ConfigError);
    CHECK_THROWS_AS(cmd_train(cfg, 4, false), ConfigError);
    // retrieval needs an index
    CHECK_THROWS_AS(cmd_retrieve(cfg), DataError);
    // embed needs a trained model
    CHECK_THROWS_AS(cmd_embed(cfg, "holdout"), DataError);
    CHECK_THROWS_AS(cmd_sweep(cfg, "no-such-axis"), ConfigError);
}

TEST_CASE("train, embed, retrieve chain on a micro run") {
    TempDir dir("pipe_chain");
    RunConfig cfg = micro_config(dir.path());
    cmd_gen_data(cfg);
    cmd_train(cfg, 1, false);

    std::string ckpt = latest_checkpoint(cfg.out);
    REQUIRE(!ckpt.empty());
    CHECK(ckpt == cfg.out + "/train/stage1.ckpt");
    CHECK(load_checkpoint(ckpt).meta.stage == 1);

    SUBCASE("latest_checkpoint prefers the highest stage within the cap") {
        cmd_train(cfg, 2, false);
        CHECK(latest_checkpoint(cfg.out) == cfg.out + "/train/stage2.ckpt");
        CHECK(latest_checkpoint(cfg.out, 1) == cfg.out + "/train/stage1.ckpt");
        CHECK(latest_checkpoint(dir.path() + "/nowhere").empty());
    }

    Corpus corpus = load_corpus(cfg.out + "/corpus");
    int64_t n_holdout = static_cast<int64_t>(corpus.holdout_ids().size());
    int64_t n_train = static_cast<int64_t>(corpus.train_ids().size());

    SUBCASE("embed then retrieve produce their artifacts") {
        cmd_embed(cfg, "holdout");
        CHECK(fs::exists(cfg.out + "/index.bin"));
        CHECK(fs::exists(cfg.out + "/embed_meta.jsonl"));
        EmbeddingIndex idx = EmbeddingIndex::load(cfg.out + "/index.bin");
        CHECK(idx.size() == n_holdout);
        CHECK(idx.dim() == cfg.model.head.d_embed);

        cmd_retrieve(cfg);
        CHECK(fs::exists(cfg.out + "/retrieval_results.jsonl"));
        CHECK(fs::exists(cfg.out + "/retrieval.csv"));

        std::ifstream jl(cfg.out + "/retrieval_results.jsonl");
        int64_t rows = 0;
        std::string line;
        while (std::getline(jl, line))
            if (!line.empty()) ++rows;
        CHECK(rows == n_holdout);  // one per gallery video
    }

    SUBCASE("embed split selects the id range") {
        cmd_embed(cfg, "train");
        CHECK(EmbeddingIndex::load(cfg.out + "/index.bin").size() == n_train);
        cmd_embed(cfg, "all");
        CHECK(EmbeddingIndex::load(cfg.out + "/index.bin").size() == corpus.size());
        CHECK_THROWS_AS(cmd_embed(cfg, "everything"), ConfigError);
    }
}
