#include <CLI11.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <iostream>
#include <string>

#include "ville/pipeline.hpp"

namespace {

using namespace ville;

// One command per output directory: .lock is created O_EXCL and removed on
// exit, so a second invocation fails fast instead of racing the first.
class DirLock {
public:
    explicit DirLock(const std::string& out_dir) : path_(out_dir + "/.lock") {
        std::filesystem::create_directories(out_dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw StateError("output directory is locked (" + path_ +
                             " exists); another command may be running — remove the file if it "
                             "is stale");
        std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] ssize_t n = ::write(fd_, pid.data(), pid.size());
    }
    ~DirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

struct Flags {
    std::string config_path;
    uint64_t seed = 0;
    std::string out;
    int64_t stage = 1;
    bool from_scratch = false;
    int64_t k = 0;
    double window_s = 0, stride_s = 0, tau_merge = 0, alpha = 0;
    std::string head;
    int64_t pooling_tokens = 0;
    int64_t fixed_embed_tokens = 0;
    std::string split = "holdout";
    std::string axis;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic-video lab: prefix-LM captioner with a contrastive embedding head\n"
                 "(data generation, staged training, retrieval / localization / rerank / "
                 "composed-retrieval evaluation)"};
    app.require_subcommand(1);

    Flags f;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", f.seed, "master seed");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--head", f.head, "embedding head variant")
            ->check(
                CLI::IsMember({"attn-free", "self-attn", "q-former", "k-former", "kv-former"}));
        sub->add_option("--pooling-tokens", f.pooling_tokens, "P for the *-former heads")
            ->check(CLI::PositiveNumber);
        sub->add_option("--fixed-embed-tokens", f.fixed_embed_tokens,
                        "pooled-state budget; 0 = adaptive (stop at EOS)")
            ->check(CLI::NonNegativeNumber);
    };
    auto add_merge = [&](CLI::App* sub) {
        sub->add_option("--window-s", f.window_s, "window length, seconds");
        sub->add_option("--stride-s", f.stride_s, "window stride, seconds");
        sub->add_option("--tau-merge", f.tau_merge, "absolute merge threshold");
        sub->add_option("--alpha", f.alpha, "relative-to-seed merge threshold");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate and save the synthetic corpus");
    add_common(gen);

    CLI::App* train = app.add_subcommand("train", "run one training stage");
    add_common(train);
    train->add_option("--stage", f.stage, "training stage")->check(CLI::Range(1, 3));
    train->add_flag("--from-scratch", f.from_scratch,
                    "stage >1: start from fresh weights instead of the prior checkpoint");

    CLI::App* embed = app.add_subcommand("embed", "build the video embedding index");
    add_common(embed);
    embed->add_option("--split", f.split, "videos to index")
        ->check(CLI::IsMember({"train", "holdout", "all"}));

    CLI::App* retrieve = app.add_subcommand("retrieve", "text->video retrieval over the index");
    add_common(retrieve);
    retrieve->add_option("--k", f.k, "results kept per query")->check(CLI::PositiveNumber);

    CLI::App* localize = app.add_subcommand("localize", "moment localization on held-out videos");
    add_common(localize);
    add_merge(localize);

    CLI::App* rerank = app.add_subcommand("rerank", "two-stage retrieval with match re-scoring");
    add_common(rerank);
    rerank->add_option("--k", f.k, "first-stage depth to re-score")->check(CLI::PositiveNumber);

    CLI::App* compose = app.add_subcommand("compose", "composed retrieval on twin videos");
    add_common(compose);

    CLI::App* eval = app.add_subcommand("eval", "every evaluation, one metrics table");
    add_common(eval);
    add_merge(eval);

    CLI::App* sweep = app.add_subcommand("sweep", "train/evaluate along one ablation axis");
    add_common(sweep);
    sweep->add_option("--axis", f.axis,
                      "head-variant | fixed-embed-tokens | pooling-tokens | merge-grid")
        ->required();

    CLI::App* report = app.add_subcommand("report", "CSV tables and plots from run artifacts");
    add_common(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // config-class failure
    }

    CLI::App* sub = app.get_subcommands().front();
    auto given = [&](const std::string& name) {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o && o->count() > 0;
    };

    try {
        RunConfig cfg =
            given("--config") ? load_run_config(f.config_path) : default_run_config();
        apply_env_overrides(cfg);  // env sits between file and flags
        if (given("--seed")) cfg.seed = f.seed;
        if (given("--out")) cfg.out = f.out;
        if (given("--head")) cfg.model.head.variant = parse_head_variant(f.head);
        if (given("--pooling-tokens")) cfg.model.head.pooling_tokens = f.pooling_tokens;
        if (given("--fixed-embed-tokens")) {
            cfg.embed.fixed_tokens = f.fixed_embed_tokens;
            cfg.stage1.fixed_embed_tokens = f.fixed_embed_tokens;
            cfg.stage2.fixed_embed_tokens = f.fixed_embed_tokens;
            cfg.stage3.fixed_embed_tokens = f.fixed_embed_tokens;
        }
        if (given("--window-s")) cfg.window.window_s = f.window_s;
        if (given("--stride-s")) cfg.window.stride_s = f.stride_s;
        if (given("--tau-merge")) cfg.merge.tau_merge = f.tau_merge;
        if (given("--alpha")) cfg.merge.alpha = f.alpha;
        if (given("--k")) {
            if (sub == rerank) cfg.rerank_k = f.k;
            else cfg.retrieval_k = f.k;
        }
        cfg.validate();

        DirLock lock(cfg.out);
        if (sub == gen) cmd_gen_data(cfg);
        else if (sub == train) cmd_train(cfg, f.stage, f.from_scratch);
        else if (sub == embed) cmd_embed(cfg, f.split);
        else if (sub == retrieve) cmd_retrieve(cfg);
        else if (sub == localize) cmd_localize(cfg);
        else if (sub == rerank) cmd_rerank(cfg);
        else if (sub == compose) cmd_compose(cfg);
        else if (sub == eval) cmd_eval(cfg);
        else if (sub == sweep) cmd_sweep(cfg, f.axis);
        else if (sub == report) cmd_report(cfg);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const VersionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const MiningError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
