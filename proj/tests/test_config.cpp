#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "test_support.hpp"
#include "ville/config.hpp"

using namespace ville;
using namespace ville::testing;

namespace {

// catch+inspect: doctest's THROWS_WITH wants the full message, these care
// about one substring (the dotted path)
template <typename Fn>
std::string config_error_message(Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    FAIL("expected ConfigError");
    return "";
}

struct EnvVar {
    std::string name;
    EnvVar(const std::string& n, const std::string& value) : name(n) {
        setenv(name.c_str(), value.c_str(), 1);
    }
    ~EnvVar() { unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("defaults are self-consistent") {
    RunConfig c = default_run_config();
    CHECK(c.seed == 7);
    CHECK(c.out == "out");
    CHECK(c.stage1.stage == 1);
    CHECK(c.stage2.stage == 2);
    CHECK(c.stage3.stage == 3);
    CHECK(c.stage3.adapter_rank == 4);  // lighter adapters for the multitask stage
    CHECK(c.model.backbone.vocab_size == 0);  // derive from corpus
    CHECK(c.model.backbone.d_frame == 0);
    CHECK_NOTHROW(c.validate());

    CHECK(run_config_from_json_text("{}", "t").seed == 7);
}

TEST_CASE("file values overlay the defaults") {
    RunConfig c = run_config_from_json_text(
        R"({"seed": 42, "corpus": {"n_videos": 60}, "stage1": {"steps": 12, "warmup_steps": 2},
            "model": {"head": {"variant": "q-former"}, "backbone": {"dtype": "f32"}}})",
        "t");
    CHECK(c.seed == 42);
    CHECK(c.corpus.n_videos == 60);
    CHECK(c.stage1.steps == 12);
    CHECK(c.stage1.warmup_steps == 2);
    CHECK(c.model.head.variant == HeadVariant::QFormer);
    CHECK(c.model.backbone.dtype == DType::f32);
    // untouched keys keep their defaults
    CHECK(c.stage3.steps == 1000);
    CHECK(c.corpus.n_symbols == 24);
}

TEST_CASE("unknown keys are rejected with their dotted path") {
    std::string msg = config_error_message(
        [] { run_config_from_json_text(R"({"corpus": {"n_video": 3}})", "t"); });
    CHECK(msg.find("corpus.n_video") != std::string::npos);

    msg = config_error_message([] { run_config_from_json_text(R"({"sede": 1})", "t"); });
    CHECK(msg.find("sede") != std::string::npos);

    msg = config_error_message([] {
        run_config_from_json_text(R"({"stage2": {"weights": {"iou": 1.0}}})", "t");
    });
    CHECK(msg.find("stage2.weights.iou") != std::string::npos);
}

TEST_CASE("type mismatches name the offending path") {
    // a float slot accepts an integer literal
    CHECK(run_config_from_json_text(R"({"corpus": {"fps": 2}})", "t").corpus.fps == 2.0);

    // ...but an integer slot refuses a float
    std::string msg = config_error_message(
        [] { run_config_from_json_text(R"({"corpus": {"n_videos": 3.5}})", "t"); });
    CHECK(msg.find("corpus.n_videos") != std::string::npos);

    CHECK_THROWS_AS(run_config_from_json_text(R"({"seed": "seven"})", "t"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"seed": -1})", "t"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"corpus": {"fps": true}})", "t"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"model": {"learnable_tau": 1}})", "t"),
                    ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"out": 3})", "t"), ConfigError);
}

TEST_CASE("malformed documents are config errors") {
    CHECK_THROWS_AS(run_config_from_json_text("{not json", "t"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text("[1,2]", "t"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"corpus": 5})", "t"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(
                        R"({"model": {"backbone": {"dtype": "f16"}}})", "t"),
                    ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(
                        R"({"model": {"head": {"variant": "mega-former"}}})", "t"),
                    ConfigError);
    // values that parse but fail validation
    CHECK_THROWS_AS(run_config_from_json_text(R"({"retrieval_k": 0})", "t"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json_text(R"({"stage1": {"steps": 0}})", "t"), ConfigError);
}

TEST_CASE("echo is a fixed point of parse") {
    RunConfig c = run_config_from_json_text(
        R"({"seed": 99, "merge": {"tau_merge": 0.33}, "stage3": {"grad_accum": 2}})", "t");
    std::string echo = run_config_echo(c);
    RunConfig back = run_config_from_json_text(echo, "echo");
    CHECK(run_config_echo(back) == echo);
    CHECK(back.seed == 99);
    CHECK(back.merge.tau_merge == 0.33);
    CHECK(back.stage3.grad_accum == 2);
}

TEST_CASE("config file loading") {
    TempDir dir("config_file");
    std::string path = dir.path() + "/run.json";
    {
        std::ofstream f(path);
        f << R"({"seed": 1234, "out": "elsewhere"})";
    }
    RunConfig c = load_run_config(path);
    CHECK(c.seed == 1234);
    CHECK(c.out == "elsewhere");
    CHECK_THROWS_AS(load_run_config(dir.path() + "/absent.json"), IoError);
}

TEST_CASE("environment overrides seed and output directory") {
    SUBCASE("both set") {
        EnvVar s("VILLE_SEED", "4242");
        EnvVar o("VILLE_OUT", "/tmp/ville_env_out");
        RunConfig c = default_run_config();
        apply_env_overrides(c);
        CHECK(c.seed == 4242);
        CHECK(c.out == "/tmp/ville_env_out");
    }
    SUBCASE("absent variables change nothing") {
        unsetenv("VILLE_SEED");
        unsetenv("VILLE_OUT");
        RunConfig c = default_run_config();
        apply_env_overrides(c);
        CHECK(c.seed == 7);
        CHECK(c.out == "out");
    }
    SUBCASE("garbage seed") {
        EnvVar s("VILLE_SEED", "12x");
        RunConfig c = default_run_config();
        CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
    }
    SUBCASE("empty seed") {
        EnvVar s("VILLE_SEED", "");
        RunConfig c = default_run_config();
        CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
    }
    SUBCASE("empty out") {
        EnvVar o("VILLE_OUT", "");
        RunConfig c = default_run_config();
        CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
    }
}

TEST_CASE("resolved_model derives corpus-coupled dimensions") {
    RunConfig c = default_run_config();
    ModelConfig m = resolved_model(c);
    int64_t expected_vocab = Vocab(c.corpus.time_buckets(), c.corpus.n_symbols).size();
    CHECK(m.backbone.vocab_size == expected_vocab);
    CHECK(m.backbone.d_frame == c.corpus.d_frame);
    CHECK(m.head.d_model == m.backbone.d_model);
    CHECK(m.head.dtype == m.backbone.dtype);

    SUBCASE("explicit values win over derivation") {
        c.model.backbone.vocab_size = 128;
        c.model.backbone.d_frame = 3;
        ModelConfig m2 = resolved_model(c);
        CHECK(m2.backbone.vocab_size == 128);
        CHECK(m2.backbone.d_frame == 3);
    }
}

TEST_CASE("run config validation sweeps the inference knobs") {
    auto bad = [](auto&& mutate) {
        RunConfig c = default_run_config();
        mutate(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    bad([](RunConfig& c) { c.window.stride_s = c.window.window_s + 1; });
    bad([](RunConfig& c) { c.window.stride_s = 0; });
    bad([](RunConfig& c) { c.merge.alpha = 0; });
    bad([](RunConfig& c) { c.merge.alpha = 1.5; });
    bad([](RunConfig& c) { c.retrieval_k = 0; });
    bad([](RunConfig& c) { c.rerank_k = 0; });
    bad([](RunConfig& c) { c.loc_top_n = 0; });
    bad([](RunConfig& c) { c.sparse_ctx_frames = 0; });
    bad([](RunConfig& c) { c.embed.max_steps = 0; });
    bad([](RunConfig& c) { c.embed.fixed_tokens = -1; });
    bad([](RunConfig& c) { c.out.clear(); });
}
