#include "ville/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "ville/io.hpp"
#include "ville/rerank.hpp"

namespace ville {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void echo_config(const RunConfig& cfg) {
    ensure_dir(cfg.out);
    write_text_file_atomic(cfg.out + "/config_echo.json", run_config_echo(cfg));
}

std::vector<int64_t> split_ids(const Corpus& corpus, const std::string& split) {
    if (split == "train") return corpus.train_ids();
    if (split == "holdout") return corpus.holdout_ids();
    if (split == "all") {
        std::vector<int64_t> ids(static_cast<size_t>(corpus.size()));
        for (int64_t i = 0; i < corpus.size(); ++i) ids[static_cast<size_t>(i)] = i;
        return ids;
    }
    throw ConfigError("split must be train|holdout|all, got '" + split + "'");
}

int64_t id_of(const Corpus& corpus, const std::string& vid) {
    for (int64_t i = 0; i < corpus.size(); ++i)
        if (corpus.videos[static_cast<size_t>(i)].id == vid) return i;
    throw DataError("unknown video id '" + vid + "'");
}

std::string decode_tokens(const Vocab& vocab, const std::vector<int64_t>& ts) {
    std::string out;
    for (size_t i = 0; i < ts.size(); ++i) {
        if (i) out += ' ';
        out += vocab.token_name(ts[i]);
    }
    return out;
}

}  // namespace

Corpus ensure_corpus(const RunConfig& cfg) {
    std::string dir = cfg.out + "/corpus";
    if (!fs::exists(dir + "/manifest.json"))
        throw DataError("no corpus at " + dir + "; run gen-data first");
    return load_corpus(dir);
}

Model build_model(const RunConfig& cfg, Rng& rng) { return Model(resolved_model(cfg), rng); }

std::string latest_checkpoint(const std::string& out_dir, int64_t upto_stage) {
    for (int64_t s = std::min<int64_t>(upto_stage, 3); s >= 1; --s) {
        std::string p = out_dir + "/train/stage" + std::to_string(s) + ".ckpt";
        if (fs::exists(p)) return p;
    }
    return "";
}

EmbeddingIndex build_video_index(Model& model, const Corpus& corpus,
                                 const std::vector<int64_t>& ids, const EmbedOptions& opt,
                                 std::vector<int64_t>* token_counts) {
    EmbeddingIndex idx(model.cfg.head.d_embed);
    for (int64_t i : ids) {
        const auto& v = corpus.videos[static_cast<size_t>(i)];
        EmbeddingVector e = embed_video(model.backbone, model.head, v.frames, opt);
        idx.add(v.id, e.values);
        if (token_counts) token_counts->push_back(e.token_count);
    }
    return idx;
}

RetrievalMetrics eval_retrieval(Model& model, const Corpus& corpus,
                                const std::vector<int64_t>& gallery, const EmbedOptions& opt) {
    if (gallery.empty()) throw ArgumentError("eval_retrieval: empty gallery");
    EmbeddingIndex vids = build_video_index(model, corpus, gallery, opt);
    EmbeddingIndex txts(model.cfg.head.d_embed);
    for (int64_t i : gallery) {
        const auto& v = corpus.videos[static_cast<size_t>(i)];
        txts.add(v.id, embed_text(model.backbone, model.head,
                                  corpus.captions[static_cast<size_t>(i)])
                           .values);
    }

    int64_t k = static_cast<int64_t>(gallery.size());
    std::vector<RetrievalResult> t2v, v2t;
    std::map<std::string, std::string> truth;
    for (int64_t i = 0; i < txts.size(); ++i) {
        const std::string& qid = txts.ids()[static_cast<size_t>(i)];
        truth[qid] = qid;
        RetrievalResult r;
        r.query_id = qid;
        for (auto& [id, sim] : vids.search(txts.vec(i), k)) r.ranked.push_back(id);
        t2v.push_back(std::move(r));
        RetrievalResult r2;
        r2.query_id = qid;
        for (auto& [id, sim] : txts.search(vids.vec(i), k)) r2.ranked.push_back(id);
        v2t.push_back(std::move(r2));
    }
    RetrievalMetrics m;
    m.t2v_r1 = recall_at_k(t2v, truth, 1);
    m.t2v_r5 = recall_at_k(t2v, truth, 5);
    m.t2v_r10 = recall_at_k(t2v, truth, 10);
    m.t2v_mdr = median_rank(t2v, truth);
    m.v2t_r1 = recall_at_k(v2t, truth, 1);
    m.v2t_r5 = recall_at_k(v2t, truth, 5);
    m.v2t_r10 = recall_at_k(v2t, truth, 10);
    m.v2t_mdr = median_rank(v2t, truth);
    return m;
}

LocalizationEval eval_localization(Model& model, const Corpus& corpus, const LocalizeConfig& cfg,
                                   double fps, int64_t max_queries) {
    LocalizationEval ev;
    for (const LocAnnotation& ann : corpus.loc) {
        if (!corpus.is_holdout(ann.video)) continue;
        if (max_queries >= 0 && static_cast<int64_t>(ev.results.size()) >= max_queries) break;
        const auto& v = corpus.videos[static_cast<size_t>(ann.video)];
        MomentResult r;
        r.query_id = v.id + ":" + std::to_string(ev.results.size());
        r.predictions = localize(model, v, ann.text, cfg, fps);
        r.truth.push_back({ann.start_s, ann.end_s});
        r.duration_s = v.duration_s;
        ev.results.push_back(std::move(r));
    }
    if (ev.results.empty()) throw DataError("eval_localization: no held-out annotations");
    ev.r1_iou50 = moment_recall_at_iou(ev.results, 0.5);
    ev.map = moment_map(ev.results);
    ev.random_baseline = random_window_baseline(ev.results, cfg.window, 0.5);
    double iou_sum = 0;
    for (const auto& r : ev.results) {
        double best = 0;
        if (!r.predictions.empty())
            for (const Span& t : r.truth)
                best = std::max(best,
                                interval_iou({r.predictions[0].start_s, r.predictions[0].end_s}, t));
        iou_sum += best;
    }
    ev.mean_iou = iou_sum / static_cast<double>(ev.results.size());
    return ev;
}

RerankEval eval_rerank(Model& model, const Corpus& corpus, const std::vector<int64_t>& gallery,
                       int64_t K, const EmbedOptions& opt) {
    if (gallery.empty()) throw ArgumentError("eval_rerank: empty gallery");
    EmbeddingIndex vids = build_video_index(model, corpus, gallery, opt);

    std::vector<RetrievalResult> first, second;
    std::map<std::string, std::string> truth;
    for (int64_t i : gallery) {
        const auto& v = corpus.videos[static_cast<size_t>(i)];
        const auto& caption = corpus.captions[static_cast<size_t>(i)];
        EmbeddingVector q = embed_text(model.backbone, model.head, caption);
        truth[v.id] = v.id;

        RetrievalResult r1;
        r1.query_id = v.id;
        for (auto& [id, sim] : vids.search(q.values, static_cast<int64_t>(gallery.size())))
            r1.ranked.push_back(id);

        auto score = [&](const std::string& cand) {
            const auto& cv = corpus.videos[static_cast<size_t>(id_of(corpus, cand))];
            return matching_score(model.backbone, cv.frames, caption);
        };
        RetrievalResult r2;
        r2.query_id = v.id;
        for (auto& [id, s] : two_stage_rerank(r1.ranked, K, score)) r2.ranked.push_back(id);

        first.push_back(std::move(r1));
        second.push_back(std::move(r2));
    }
    RerankEval ev;
    ev.first_r1 = recall_at_k(first, truth, 1);
    ev.first_r5 = recall_at_k(first, truth, 5);
    ev.rerank_r1 = recall_at_k(second, truth, 1);
    ev.rerank_r5 = recall_at_k(second, truth, 5);
    return ev;
}

ComposedEval eval_composed(Model& model, const Corpus& corpus, const EmbedOptions& opt,
                           int64_t sparse_ctx_frames) {
    ComposedEval ev;
    std::vector<int64_t> gallery = corpus.holdout_ids();
    if (gallery.empty()) throw DataError("eval_composed: empty holdout gallery");
    EmbeddingIndex idx = build_video_index(model, corpus, gallery, opt);
    ev.gallery_size = idx.size();
    ev.random_r1 = 1.0 / static_cast<double>(idx.size());

    std::vector<RetrievalResult> results;
    std::map<std::string, std::string> truth;
    for (const ComposedTriplet& t : corpus.composed) {
        if (!corpus.is_holdout(t.source) || !corpus.is_holdout(t.target)) continue;
        const auto& src = corpus.videos[static_cast<size_t>(t.source)];
        EmbeddingVector q = embed_composed(model.backbone, model.head,
                                           sparse_frames(src, sparse_ctx_frames), t.change_text);
        RetrievalResult r;
        r.query_id = src.id + ">" + corpus.videos[static_cast<size_t>(t.target)].id;
        truth[r.query_id] = corpus.videos[static_cast<size_t>(t.target)].id;
        for (auto& [id, sim] : idx.search(q.values, idx.size())) r.ranked.push_back(id);
        results.push_back(std::move(r));
    }
    if (results.empty()) throw DataError("eval_composed: no held-out composed triplets");
    ev.n_queries = static_cast<int64_t>(results.size());
    ev.r1 = recall_at_k(results, truth, 1);
    ev.r5 = recall_at_k(results, truth, std::min<int64_t>(5, idx.size()));
    return ev;
}

GenerativeEval eval_generative(Model& model, const Corpus& corpus,
                               const std::vector<int64_t>& ids) {
    GenerativeEval ev;
    NoGradGuard ng;
    double nll_sum = 0;
    int64_t tokens = 0;
    for (int64_t i : ids) {
        const auto& v = corpus.videos[static_cast<size_t>(i)];
        CaptionLossOut c = captioning_loss(model.backbone, video_prefix(v.frames),
                                           corpus.captions[static_cast<size_t>(i)]);
        nll_sum += c.sum.scalar();
        tokens += c.n_tokens;
        ++ev.n_captions;
    }
    if (tokens > 0) ev.caption_nll = nll_sum / static_cast<double>(tokens);

    int64_t qa_hits = 0;
    for (const QAPair& q : corpus.qa) {
        if (std::find(ids.begin(), ids.end(), q.video) == ids.end()) continue;
        const auto& v = corpus.videos[static_cast<size_t>(q.video)];
        TokenSequence seq;
        for (const auto& f : v.frames) seq.push_frame(f);
        for (int64_t t : q.question) seq.push_token(t);
        seq.prefix_len = seq.size();
        std::vector<int64_t> gen = model.backbone.generate(
            seq, static_cast<int64_t>(q.answer.size()) + 1, false);
        if (!gen.empty() && gen.back() == tok::EOS) gen.pop_back();
        if (gen == q.answer) ++qa_hits;
        ++ev.n_qa;
    }
    if (ev.n_qa > 0) ev.qa_accuracy = static_cast<double>(qa_hits) / static_cast<double>(ev.n_qa);
    return ev;
}

// ---------------------------------------------------------------- commands

void cmd_gen_data(const RunConfig& cfg) {
    echo_config(cfg);
    Corpus corpus = generate_corpus(cfg.corpus, cfg.seed);
    std::string dir = cfg.out + "/corpus";
    save_corpus(corpus, dir);
    std::cout << "corpus: " << corpus.size() << " videos (" << corpus.holdout_start
              << " train / " << corpus.size() - corpus.holdout_start << " holdout), "
              << corpus.qa.size() << " qa, " << corpus.loc.size() << " annotations, "
              << corpus.composed.size() << " composed triplets\n"
              << "checksum: " << corpus_checksum(dir) << "\n";
}

void cmd_train(const RunConfig& cfg, int64_t stage, bool from_scratch) {
    if (stage < 1 || stage > 3) throw ConfigError("train: --stage must be 1, 2, or 3");
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);
    Rng model_rng(cfg.seed * 1000003ull + 17);
    Model model = build_model(cfg, model_rng);

    if (stage > 1) {
        std::string prior = latest_checkpoint(cfg.out, stage - 1);
        if (prior.empty() && !from_scratch)
            throw ConfigError("train: stage " + std::to_string(stage) +
                              " needs a prior-stage checkpoint under " + cfg.out +
                              "/train (expected e.g. " + cfg.out + "/train/stage" +
                              std::to_string(stage - 1) + ".ckpt); pass --from-scratch to skip");
        if (!prior.empty()) {
            LoadedCheckpoint ck = load_checkpoint(prior);
            Rng adapter_rng(cfg.seed * 1000003ull + 29);
            restore_model(ck, model, adapter_rng);
            std::cout << "initialized from " << prior << "\n";
        } else {
            std::cout << "training stage " << stage << " from scratch\n";
        }
    }

    const StageConfig& sc = stage == 1 ? cfg.stage1 : stage == 2 ? cfg.stage2 : cfg.stage3;
    RunStageResult res = run_stage(model, corpus, sc, cfg.out + "/train",
                                   cfg.seed * 1000003ull + 1000 + static_cast<uint64_t>(stage));
    const StepLosses& last = res.log.back();
    std::cout << "stage " << stage << ": " << res.updates << " updates, final total loss "
              << format_metric(last.total) << "\n"
              << "checkpoint: " << res.checkpoint_path << "\n"
              << "log: " << res.log_path << "\n";
}

namespace {

Model model_from_latest(const RunConfig& cfg) {
    std::string ck = latest_checkpoint(cfg.out);
    if (ck.empty())
        throw DataError("no checkpoint under " + cfg.out + "/train (expected " + cfg.out +
                        "/train/stage{1,2,3}.ckpt); run train first");
    Rng rng(cfg.seed * 1000003ull + 17);
    Model m = load_model(ck, rng);
    std::cout << "model: " << ck << "\n";
    return m;
}

}  // namespace

void cmd_embed(const RunConfig& cfg, const std::string& split) {
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);
    Model model = model_from_latest(cfg);
    std::vector<int64_t> ids = split_ids(corpus, split);
    std::vector<int64_t> token_counts;
    EmbeddingIndex idx = build_video_index(model, corpus, ids, cfg.embed, &token_counts);
    idx.save(cfg.out + "/index.bin");

    std::string meta;
    for (size_t i = 0; i < ids.size(); ++i) {
        json row;
        row["id"] = corpus.videos[static_cast<size_t>(ids[i])].id;
        row["token_count"] = token_counts[i];
        row["events"] = corpus.videos[static_cast<size_t>(ids[i])].events.size();
        meta += row.dump() + "\n";
    }
    write_text_file_atomic(cfg.out + "/embed_meta.jsonl", meta);
    std::cout << "indexed " << idx.size() << " videos (" << split << ") -> " << cfg.out
              << "/index.bin\n";
}

void cmd_retrieve(const RunConfig& cfg) {
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);
    Model model = model_from_latest(cfg);
    std::string index_path = cfg.out + "/index.bin";
    if (!fs::exists(index_path))
        throw DataError("no index at " + index_path + "; run embed first");
    EmbeddingIndex idx = EmbeddingIndex::load(index_path);

    std::vector<RetrievalResult> results;
    std::map<std::string, std::string> truth;
    std::string lines;
    for (const std::string& vid : idx.ids()) {
        int64_t i = id_of(corpus, vid);
        EmbeddingVector q =
            embed_text(model.backbone, model.head, corpus.captions[static_cast<size_t>(i)]);
        RetrievalResult r;
        r.query_id = vid;
        truth[vid] = vid;
        auto ranked = idx.search(q.values, idx.size());
        for (auto& [id, sim] : ranked) r.ranked.push_back(id);
        json row;
        row["query"] = vid;
        row["caption"] = decode_tokens(corpus.vocab, corpus.captions[static_cast<size_t>(i)]);
        json top = json::array();
        for (int64_t j = 0; j < std::min<int64_t>(cfg.retrieval_k, idx.size()); ++j)
            top.push_back({{"id", ranked[static_cast<size_t>(j)].first},
                           {"sim", ranked[static_cast<size_t>(j)].second}});
        row["top"] = std::move(top);
        lines += row.dump() + "\n";
        results.push_back(std::move(r));
    }
    write_text_file_atomic(cfg.out + "/retrieval_results.jsonl", lines);

    MetricsTable t;
    t.columns = {"metric", "value"};
    t.add_row({"t2v_r1", format_metric(recall_at_k(results, truth, 1))});
    t.add_row({"t2v_r5", format_metric(recall_at_k(results, truth, 5))});
    t.add_row({"t2v_r10", format_metric(recall_at_k(results, truth, 10))});
    t.add_row({"t2v_mdr", format_metric(median_rank(results, truth))});
    write_table_csv(t, cfg.out + "/retrieval.csv");
    std::cout << "t2v R@1 " << format_metric(recall_at_k(results, truth, 1)) << " over "
              << results.size() << " queries -> " << cfg.out << "/retrieval.csv\n";
}

void cmd_localize(const RunConfig& cfg) {
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);
    Model model = model_from_latest(cfg);
    LocalizeConfig lc;
    lc.window = cfg.window;
    lc.merge = cfg.merge;
    lc.top_n = cfg.loc_top_n;
    lc.sparse_ctx_frames = cfg.sparse_ctx_frames;
    lc.embed = cfg.embed;
    LocalizationEval ev = eval_localization(model, corpus, lc, corpus.cfg.fps);

    std::string lines;
    for (const auto& r : ev.results) {
        for (const auto& p : r.predictions) {
            json row;
            row["video_id"] = p.video_id;
            row["query"] = r.query_id;
            row["start_s"] = p.start_s;
            row["end_s"] = p.end_s;
            row["score"] = p.score;
            lines += row.dump() + "\n";
        }
    }
    write_text_file_atomic(cfg.out + "/localization_results.jsonl", lines);

    MetricsTable t;
    t.columns = {"metric", "value"};
    t.add_row({"loc_r1_iou50", format_metric(ev.r1_iou50)});
    t.add_row({"loc_map", format_metric(ev.map)});
    t.add_row({"loc_mean_iou", format_metric(ev.mean_iou)});
    t.add_row({"loc_random_baseline", format_metric(ev.random_baseline)});
    write_table_csv(t, cfg.out + "/localization.csv");
    std::cout << "moment R@1@IoU0.5 " << format_metric(ev.r1_iou50) << " (chance "
              << format_metric(ev.random_baseline) << ") over " << ev.results.size()
              << " queries -> " << cfg.out << "/localization.csv\n";
}

void cmd_rerank(const RunConfig& cfg) {
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);
    Model model = model_from_latest(cfg);
    RerankEval ev = eval_rerank(model, corpus, corpus.holdout_ids(), cfg.rerank_k, cfg.embed);
    MetricsTable t;
    t.columns = {"metric", "value"};
    t.add_row({"first_r1", format_metric(ev.first_r1)});
    t.add_row({"first_r5", format_metric(ev.first_r5)});
    t.add_row({"rerank_r1", format_metric(ev.rerank_r1)});
    t.add_row({"rerank_r5", format_metric(ev.rerank_r5)});
    write_table_csv(t, cfg.out + "/rerank.csv");
    std::cout << "R@1 " << format_metric(ev.first_r1) << " -> " << format_metric(ev.rerank_r1)
              << ", R@5 " << format_metric(ev.first_r5) << " -> " << format_metric(ev.rerank_r5)
              << " (K=" << cfg.rerank_k << ") -> " << cfg.out << "/rerank.csv\n";
}

void cmd_compose(const RunConfig& cfg) {
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);
    Model model = model_from_latest(cfg);
    ComposedEval ev = eval_composed(model, corpus, cfg.embed, cfg.sparse_ctx_frames);
    MetricsTable t;
    t.columns = {"metric", "value"};
    t.add_row({"composed_r1", format_metric(ev.r1)});
    t.add_row({"composed_r5", format_metric(ev.r5)});
    t.add_row({"composed_random_r1", format_metric(ev.random_r1)});
    write_table_csv(t, cfg.out + "/composed.csv");
    std::cout << "composed R@1 " << format_metric(ev.r1) << " (chance "
              << format_metric(ev.random_r1) << ") over " << ev.n_queries << " queries -> "
              << cfg.out << "/composed.csv\n";
}

void cmd_eval(const RunConfig& cfg) {
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);
    Model model = model_from_latest(cfg);
    std::vector<int64_t> gallery = corpus.holdout_ids();

    RetrievalMetrics rm = eval_retrieval(model, corpus, gallery, cfg.embed);
    LocalizeConfig lc;
    lc.window = cfg.window;
    lc.merge = cfg.merge;
    lc.top_n = cfg.loc_top_n;
    lc.sparse_ctx_frames = cfg.sparse_ctx_frames;
    lc.embed = cfg.embed;
    LocalizationEval le = eval_localization(model, corpus, lc, corpus.cfg.fps);
    RerankEval re = eval_rerank(model, corpus, gallery, cfg.rerank_k, cfg.embed);
    ComposedEval ce = eval_composed(model, corpus, cfg.embed, cfg.sparse_ctx_frames);
    GenerativeEval ge = eval_generative(model, corpus, gallery);

    std::vector<std::pair<std::string, double>> metrics = {
        {"t2v_r1", rm.t2v_r1},         {"t2v_r5", rm.t2v_r5},
        {"t2v_r10", rm.t2v_r10},       {"t2v_mdr", rm.t2v_mdr},
        {"v2t_r1", rm.v2t_r1},         {"v2t_r5", rm.v2t_r5},
        {"v2t_r10", rm.v2t_r10},       {"v2t_mdr", rm.v2t_mdr},
        {"loc_r1_iou50", le.r1_iou50}, {"loc_map", le.map},
        {"loc_mean_iou", le.mean_iou}, {"loc_random_baseline", le.random_baseline},
        {"first_r1", re.first_r1},     {"rerank_r1", re.rerank_r1},
        {"first_r5", re.first_r5},     {"rerank_r5", re.rerank_r5},
        {"composed_r1", ce.r1},        {"composed_r5", ce.r5},
        {"composed_random_r1", ce.random_r1},
        {"caption_nll", ge.caption_nll},
        {"qa_accuracy", ge.qa_accuracy},
    };
    MetricsTable t;
    t.columns = {"metric", "value"};
    for (auto& [k, v] : metrics) t.add_row({k, format_metric(v)});
    write_table_csv(t, cfg.out + "/metrics.csv");
    std::cout << "wrote " << metrics.size() << " metrics -> " << cfg.out << "/metrics.csv\n";
}

void cmd_sweep(const RunConfig& cfg, const std::string& axis) {
    echo_config(cfg);
    Corpus corpus = ensure_corpus(cfg);

    auto train_and_eval = [&](const RunConfig& c, const std::string& tag) {
        Rng rng(c.seed * 1000003ull + 17);
        Model model = build_model(c, rng);
        run_stage(model, corpus, c.stage1, c.out + "/sweep/" + tag,
                  c.seed * 1000003ull + 1001);
        return model;
    };

    if (axis == "head-variant") {
        MetricsTable t;
        t.columns = {"variant", "t2v_r1", "t2v_r5", "t2v_mdr", "head_rows"};
        for (HeadVariant v : {HeadVariant::AttnFree, HeadVariant::SelfAttn, HeadVariant::QFormer,
                              HeadVariant::KFormer, HeadVariant::KvFormer}) {
            RunConfig c = cfg;
            c.model.head.variant = v;
            Model model = train_and_eval(c, "head_" + head_variant_name(v));
            RetrievalMetrics m = eval_retrieval(model, corpus, corpus.holdout_ids(), c.embed);
            // pooled-row count on a probe input documents each head's shape
            NoGradGuard ng;
            const auto& probe = corpus.videos[0];
            Tensor states = model.backbone.encode(video_prefix(probe.frames));
            int64_t rows = model.head.pool(states).dim(0);
            t.add_row({head_variant_name(v), format_metric(m.t2v_r1), format_metric(m.t2v_r5),
                       format_metric(m.t2v_mdr), std::to_string(rows)});
        }
        write_table_csv(t, cfg.out + "/sweep_head.csv");
        std::cout << "5 variants -> " << cfg.out << "/sweep_head.csv\n";
        return;
    }

    if (axis == "fixed-embed-tokens") {
        MetricsTable t;
        t.columns = {"fixed_tokens", "t2v_r1", "t2v_r5", "token_mean", "token_var"};
        for (int64_t ft : {0, 1, 5}) {
            RunConfig c = cfg;
            c.stage1.fixed_embed_tokens = ft;
            c.embed.fixed_tokens = ft;
            Model model = train_and_eval(c, "fixed_" + std::to_string(ft));
            RetrievalMetrics m = eval_retrieval(model, corpus, corpus.holdout_ids(), c.embed);
            std::vector<int64_t> counts;
            build_video_index(model, corpus, corpus.holdout_ids(), c.embed, &counts);
            double mean = 0;
            for (int64_t x : counts) mean += static_cast<double>(x);
            mean /= static_cast<double>(counts.size());
            double var = 0;
            for (int64_t x : counts) var += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
            var /= static_cast<double>(counts.size());
            t.add_row({std::to_string(ft), format_metric(m.t2v_r1), format_metric(m.t2v_r5),
                       format_metric(mean), format_metric(var)});
        }
        write_table_csv(t, cfg.out + "/sweep_fixed_tokens.csv");
        std::cout << "3 budgets -> " << cfg.out << "/sweep_fixed_tokens.csv\n";
        return;
    }

    if (axis == "pooling-tokens") {
        MetricsTable t;
        t.columns = {"pooling_tokens", "t2v_r1", "t2v_r5", "t2v_mdr"};
        for (int64_t p : {4, 16, 64}) {
            RunConfig c = cfg;
            c.model.head.pooling_tokens = p;
            Model model = train_and_eval(c, "pool_" + std::to_string(p));
            RetrievalMetrics m = eval_retrieval(model, corpus, corpus.holdout_ids(), c.embed);
            t.add_row({std::to_string(p), format_metric(m.t2v_r1), format_metric(m.t2v_r5),
                       format_metric(m.t2v_mdr)});
        }
        write_table_csv(t, cfg.out + "/sweep_pooling.csv");
        std::cout << "3 widths -> " << cfg.out << "/sweep_pooling.csv\n";
        return;
    }

    if (axis == "merge-grid") {
        Model model = model_from_latest(cfg);
        MetricsTable t;
        t.columns = {"window_s", "stride_s", "tau_merge", "loc_r1_iou50", "loc_mean_iou"};
        for (double w : {5.0, 10.0, 15.0}) {
            for (double s : {5.0, 10.0}) {
                if (s > w) continue;
                for (double tm : {0.3, 0.4, 0.5}) {
                    LocalizeConfig lc;
                    lc.window = {w, s};
                    lc.merge = {tm, cfg.merge.alpha};
                    lc.top_n = 1;
                    lc.sparse_ctx_frames = cfg.sparse_ctx_frames;
                    lc.embed = cfg.embed;
                    LocalizationEval ev = eval_localization(model, corpus, lc, corpus.cfg.fps);
                    t.add_row({format_metric(w), format_metric(s), format_metric(tm),
                               format_metric(ev.r1_iou50), format_metric(ev.mean_iou)});
                }
            }
        }
        write_table_csv(t, cfg.out + "/sweep_merge.csv");
        std::cout << "merge grid -> " << cfg.out << "/sweep_merge.csv\n";
        return;
    }

    throw ConfigError(
        "sweep: unknown --axis '" + axis +
        "' (expected head-variant|fixed-embed-tokens|pooling-tokens|merge-grid)");
}

void cmd_report(const RunConfig& cfg) {
    echo_config(cfg);
    ReportInputs in;
    for (int64_t s = 3; s >= 1; --s) {
        std::string p = cfg.out + "/train/stage" + std::to_string(s) + "_log.jsonl";
        if (fs::exists(p)) {
            in.train_log_jsonl = p;
            break;
        }
    }
    std::string metrics_csv = cfg.out + "/metrics.csv";
    if (fs::exists(metrics_csv)) {
        std::ifstream f(metrics_csv);
        std::string line;
        std::getline(f, line);  // header
        while (std::getline(f, line)) {
            size_t comma = line.find(',');
            if (comma == std::string::npos) continue;
            in.metrics.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
        }
    }
    std::string meta = cfg.out + "/embed_meta.jsonl";
    if (fs::exists(meta)) {
        std::ifstream f(meta);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            json row = json::parse(line, nullptr, false);
            if (!row.is_discarded() && row.contains("token_count"))
                in.token_counts.push_back(row["token_count"].get<int64_t>());
        }
    }
    if (in.train_log_jsonl.empty() && in.metrics.empty() && in.token_counts.empty())
        throw DataError("report: nothing to report under " + cfg.out +
                        " (need a train log, metrics.csv, or embed_meta.jsonl)");
    ReportResult res = emit_report(in, cfg.out + "/report");
    std::cout << "report: " << res.files.size() << " files under " << cfg.out << "/report";
    if (res.plot_warnings) std::cout << " (" << res.plot_warnings << " plot warnings)";
    std::cout << "\n";
}

}  // namespace ville
