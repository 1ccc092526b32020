#include "ville/trainer.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ville/io.hpp"

namespace ville {

using nlohmann::json;

void StageConfig::validate() const {
    if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2, or 3");
    if (steps <= 0) throw ConfigError("stage: steps must be > 0");
    if (warmup_steps < 0 || warmup_steps > steps)
        throw ConfigError("stage: warmup_steps must be in [0, steps]");
    if (grad_accum < 1) throw ConfigError("stage: grad_accum must be >= 1");
    if (batch_size < 1) throw ConfigError("stage: batch_size must be >= 1");
    if (adapter_rank < 0) throw ConfigError("stage: adapter_rank must be >= 0");
    if (composed_fraction < 0 || composed_fraction > 1)
        throw ConfigError("stage: composed_fraction must be in [0,1]");
    if (fixed_embed_tokens < 0) throw ConfigError("stage: fixed_embed_tokens must be >= 0");
    if (loc_windows.stride_s <= 0 || loc_windows.stride_s > loc_windows.window_s)
        throw ConfigError("stage: loc window grid needs 0 < stride <= window");
}

void StepLosses::add(const StepLosses& o) {
    cap += o.cap;
    qa += o.qa;
    ret += o.ret;
    match += o.match;
    loc += o.loc;
    total += o.total;
    has_cap |= o.has_cap;
    has_qa |= o.has_qa;
    has_ret |= o.has_ret;
    has_match |= o.has_match;
    has_loc |= o.has_loc;
    loc_dropped += o.loc_dropped;
    ret_skipped += o.ret_skipped;
    renorm_warnings += o.renorm_warnings;
}

void StepLosses::scale_by(double f) {
    cap *= f;
    qa *= f;
    ret *= f;
    match *= f;
    loc *= f;
    total *= f;
}

namespace {

Tensor as_row(const Tensor& v) { return reshape(v, {1, v.numel()}); }

const std::vector<int64_t>& caption_for(const Corpus& corpus, int64_t id, int64_t stage) {
    return stage == 2 ? corpus.detailed_captions[static_cast<size_t>(id)]
                      : corpus.captions[static_cast<size_t>(id)];
}

int64_t pick_from(const std::vector<int64_t>& pool, Rng& rng) {
    return pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
}

// ids sampled without replacement when the pool allows, uniform otherwise
std::vector<int64_t> sample_ids(const std::vector<int64_t>& pool, int64_t n, Rng& rng) {
    if (pool.empty()) return {};
    if (n >= static_cast<int64_t>(pool.size())) return pool;
    auto idx = rng.sample_without_replacement(static_cast<int64_t>(pool.size()), n);
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i : idx) out.push_back(pool[static_cast<size_t>(i)]);
    return out;
}

}  // namespace

MultitaskBatch make_multitask_batch(const Corpus& corpus, const StageConfig& cfg, Rng& rng) {
    MultitaskBatch b;
    std::vector<int64_t> train = corpus.train_ids();
    if (train.empty()) throw BatchError("multitask batch: corpus has no training videos");

    b.cap = sample_ids(train, cfg.batch_size, rng);

    std::vector<int64_t> qa_pool;
    for (size_t i = 0; i < corpus.qa.size(); ++i)
        if (!corpus.is_holdout(corpus.qa[i].video)) qa_pool.push_back(static_cast<int64_t>(i));
    b.qa = sample_ids(qa_pool, cfg.qa_batch, rng);

    std::vector<int64_t> twin_pool;
    for (size_t i = 0; i < corpus.composed.size(); ++i)
        if (!corpus.is_holdout(corpus.composed[i].source) &&
            !corpus.is_holdout(corpus.composed[i].target))
            twin_pool.push_back(static_cast<int64_t>(i));
    for (int64_t r = 0; r < cfg.batch_size; ++r) {
        RetEntry e;
        if (!twin_pool.empty() && rng.uniform() < cfg.composed_fraction) {
            e.composed = pick_from(twin_pool, rng);
            e.video = corpus.composed[static_cast<size_t>(e.composed)].target;
        } else {
            e.video = pick_from(train, rng);
        }
        b.ret.push_back(e);
    }

    for (int64_t r = 0; r < cfg.match_batch; ++r) {
        MatchEntry e;
        e.video = pick_from(train, rng);
        e.positive = (r % 2 == 0);
        e.caption_video = e.video;
        if (!e.positive && train.size() > 1) {
            do {
                e.caption_video = pick_from(train, rng);
            } while (e.caption_video == e.video);
        } else if (!e.positive) {
            e.positive = true;  // single-video corpus: no negative caption exists
        }
        b.match.push_back(e);
    }

    std::vector<int64_t> loc_pool;
    for (size_t i = 0; i < corpus.loc.size(); ++i)
        if (!corpus.is_holdout(corpus.loc[i].video)) loc_pool.push_back(static_cast<int64_t>(i));
    b.loc = sample_ids(loc_pool, cfg.loc_batch, rng);

    return b;
}

StepLosses stage12_step(Model& model, const Corpus& corpus, const std::vector<int64_t>& video_ids,
                        const StageConfig& cfg) {
    if (video_ids.empty()) throw BatchError("stage12_step: empty batch");
    StepLosses out;

    // pass 1: frames + trigger -> captioning NLL and teacher-forced video embedding
    Tensor cap_sum;
    int64_t cap_tokens = 0;
    std::vector<Tensor> vid_rows, txt_rows;
    for (int64_t id : video_ids) {
        const auto& v = corpus.videos[static_cast<size_t>(id)];
        const auto& caption = caption_for(corpus, id, cfg.stage);
        JointCaptionEmbed j = joint_caption_embed(model.backbone, model.head, v.frames, caption,
                                                  cfg.fixed_embed_tokens);
        cap_sum = cap_sum.defined() ? add(cap_sum, j.caption.sum) : j.caption.sum;
        cap_tokens += j.caption.n_tokens;
        vid_rows.push_back(as_row(j.video.unit));
    }
    // pass 2: captions alone
    for (int64_t id : video_ids) {
        const auto& caption = caption_for(corpus, id, cfg.stage);
        txt_rows.push_back(as_row(embed_text_t(model.backbone, model.head, caption).unit));
    }

    Tensor cap_mean = scale(cap_sum, 1.0 / static_cast<double>(cap_tokens));
    out.cap = cap_mean.scalar();
    out.has_cap = true;
    Tensor total = scale(cap_mean, cfg.weights.cap);

    if (video_ids.size() >= 2) {
        int warnings = 0;
        Tensor ret = retrieval_loss(concat_rows(vid_rows), concat_rows(txt_rows), model.tau,
                                    cfg.symmetric_ret, &warnings);
        out.ret = ret.scalar();
        out.has_ret = true;
        out.renorm_warnings = warnings;
        total = add(total, scale(ret, cfg.weights.ret));
    } else {
        out.ret_skipped = 1;  // a lone pair has no in-batch negatives
    }

    out.total = total.scalar();
    backward(total);
    return out;
}

StepLosses stage3_step(Model& model, const Corpus& corpus, const MultitaskBatch& batch,
                       const StageConfig& cfg, Rng& mine_rng) {
    if (batch.empty()) throw BatchError("stage3_step: all task minibatches empty");
    StepLosses out;
    std::vector<Tensor> terms;

    if (!batch.cap.empty()) {
        Tensor sum;
        int64_t tokens = 0;
        for (int64_t id : batch.cap) {
            const auto& v = corpus.videos[static_cast<size_t>(id)];
            CaptionLossOut c = captioning_loss(model.backbone, video_prefix(v.frames),
                                               corpus.captions[static_cast<size_t>(id)]);
            sum = sum.defined() ? add(sum, c.sum) : c.sum;
            tokens += c.n_tokens;
        }
        Tensor mean = scale(sum, 1.0 / static_cast<double>(tokens));
        out.cap = mean.scalar();
        out.has_cap = true;
        terms.push_back(scale(mean, cfg.weights.cap));
    }

    if (!batch.qa.empty()) {
        Tensor sum;
        int64_t tokens = 0;
        for (int64_t qi : batch.qa) {
            const QAPair& q = corpus.qa[static_cast<size_t>(qi)];
            const auto& v = corpus.videos[static_cast<size_t>(q.video)];
            TokenSequence seq;
            for (const auto& f : v.frames) seq.push_frame(f);
            for (int64_t t : q.question) seq.push_token(t);
            seq.prefix_len = seq.size();
            CaptionLossOut c = captioning_loss(model.backbone, seq, q.answer);
            sum = sum.defined() ? add(sum, c.sum) : c.sum;
            tokens += c.n_tokens;
        }
        Tensor mean = scale(sum, 1.0 / static_cast<double>(tokens));
        out.qa = mean.scalar();
        out.has_qa = true;
        terms.push_back(scale(mean, cfg.weights.qa));
    }

    if (batch.ret.size() >= 2) {
        std::vector<Tensor> vid_rows, txt_rows;
        for (const RetEntry& e : batch.ret) {
            const auto& v = corpus.videos[static_cast<size_t>(e.video)];
            vid_rows.push_back(as_row(embed_video_teacher_t(model.backbone, model.head, v.frames,
                                                            corpus.captions[static_cast<size_t>(e.video)],
                                                            cfg.fixed_embed_tokens)
                                          .unit));
            if (e.composed >= 0) {
                const ComposedTriplet& t = corpus.composed[static_cast<size_t>(e.composed)];
                const auto& src = corpus.videos[static_cast<size_t>(t.source)];
                txt_rows.push_back(as_row(
                    embed_contextual_text_t(model.backbone, model.head,
                                            sparse_frames(src, cfg.sparse_ctx_frames), t.change_text)
                        .unit));
            } else {
                txt_rows.push_back(as_row(embed_text_t(model.backbone, model.head,
                                                       corpus.captions[static_cast<size_t>(e.video)])
                                              .unit));
            }
        }
        int warnings = 0;
        Tensor ret = retrieval_loss(concat_rows(vid_rows), concat_rows(txt_rows), model.tau,
                                    cfg.symmetric_ret, &warnings);
        out.ret = ret.scalar();
        out.has_ret = true;
        out.renorm_warnings += warnings;
        terms.push_back(scale(ret, cfg.weights.ret));
    } else if (!batch.ret.empty()) {
        out.ret_skipped = 1;
    }

    if (!batch.match.empty()) {
        Tensor sum;
        for (const MatchEntry& e : batch.match) {
            const auto& v = corpus.videos[static_cast<size_t>(e.video)];
            Tensor l = matching_loss(model.backbone, v.frames,
                                     corpus.captions[static_cast<size_t>(e.caption_video)],
                                     e.positive);
            sum = sum.defined() ? add(sum, l) : l;
        }
        Tensor mean = scale(sum, 1.0 / static_cast<double>(batch.match.size()));
        out.match = mean.scalar();
        out.has_match = true;
        terms.push_back(scale(mean, cfg.weights.match));
    }

    if (!batch.loc.empty()) {
        std::vector<LocTriplet> triplets;
        for (int64_t li : batch.loc) {
            const LocAnnotation& ann = corpus.loc[static_cast<size_t>(li)];
            const auto& v = corpus.videos[static_cast<size_t>(ann.video)];
            Span pos{ann.start_s, ann.end_s};
            std::vector<Span> negs;
            try {
                negs = mine_hard_negatives(v.duration_s, pos, cfg.loc_windows, 2, 0.2, mine_rng);
            } catch (const MiningError&) {
                ++out.loc_dropped;
                continue;
            }
            LocTriplet t;
            t.text = embed_contextual_text_t(model.backbone, model.head,
                                             sparse_frames(v, cfg.sparse_ctx_frames), ann.text)
                         .unit;
            auto clip_embed = [&](const Span& s) {
                return embed_video_teacher_t(model.backbone, model.head,
                                             frames_in_span(v, s, corpus.cfg.fps),
                                             span_caption(v, s, corpus.vocab),
                                             cfg.fixed_embed_tokens)
                    .unit;
            };
            t.positive = clip_embed(pos);
            for (const Span& s : negs) t.negatives.push_back(clip_embed(s));
            triplets.push_back(std::move(t));
        }
        if (!triplets.empty()) {
            Tensor l = localization_loss(triplets, model.tau);
            out.loc = l.scalar();
            out.has_loc = true;
            terms.push_back(scale(l, cfg.weights.loc));
        }
    }

    if (terms.empty()) throw BatchError("stage3_step: every task minibatch came up empty");
    Tensor total = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    out.total = total.scalar();
    backward(total);
    return out;
}

namespace {

json losses_json(const StepLosses& l) {
    json j;
    if (l.has_cap) j["cap"] = l.cap;
    if (l.has_qa) j["qa"] = l.qa;
    if (l.has_ret) j["ret"] = l.ret;
    if (l.has_match) j["match"] = l.match;
    if (l.has_loc) j["loc"] = l.loc;
    j["total"] = l.total;
    if (l.loc_dropped) j["loc_dropped"] = l.loc_dropped;
    if (l.ret_skipped) j["ret_skipped"] = l.ret_skipped;
    return j;
}

bool losses_finite(const StepLosses& l) {
    return std::isfinite(l.total) && std::isfinite(l.cap) && std::isfinite(l.qa) &&
           std::isfinite(l.ret) && std::isfinite(l.match) && std::isfinite(l.loc);
}

}  // namespace

RunStageResult run_stage(Model& model, const Corpus& corpus, const StageConfig& cfg,
                         const std::string& out_dir, uint64_t seed) {
    cfg.validate();
    ensure_dir(out_dir);
    Rng rng(seed);
    Rng batch_rng = rng.fork(1);
    Rng adapter_rng = rng.fork(2);
    Rng mine_rng = rng.fork(3);

    if (cfg.adapter_rank > 0)
        model.backbone.apply_adapters(cfg.adapter_rank, adapter_rng, cfg.adapter_scale);
    if (cfg.freeze_base) model.set_base_trainable(false);

    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.weight_decay = cfg.weight_decay;
    Optimizer opt(model.parameters(), ocfg);

    RunStageResult res;
    res.log_path = out_dir + "/stage" + std::to_string(cfg.stage) + "_log.jsonl";
    std::ofstream log(res.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open " + res.log_path);

    std::vector<int64_t> train = corpus.train_ids();
    if (train.empty()) throw DataError("run_stage: corpus has no training videos");

    for (int64_t step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        StepLosses acc;
        json batch_echo = json::array();  // kept for the non-finite diagnostic
        for (int64_t micro = 0; micro < cfg.grad_accum; ++micro) {
            StepLosses l;
            if (cfg.stage == 3) {
                MultitaskBatch b = make_multitask_batch(corpus, cfg, batch_rng);
                json be;
                be["cap"] = b.cap;
                be["qa"] = b.qa;
                be["loc"] = b.loc;
                batch_echo.push_back(std::move(be));
                l = stage3_step(model, corpus, b, cfg, mine_rng);
            } else {
                std::vector<int64_t> ids = sample_ids(train, cfg.batch_size, batch_rng);
                batch_echo.push_back(ids);
                l = stage12_step(model, corpus, ids, cfg);
            }
            acc.add(l);
        }
        acc.scale_by(1.0 / static_cast<double>(cfg.grad_accum));

        if (!losses_finite(acc)) {
            json dump;
            dump["step"] = step;
            dump["losses"] = losses_json(acc);
            dump["batches"] = std::move(batch_echo);
            std::string dump_path = out_dir + "/diagnostic.json";
            write_text_file_atomic(dump_path, dump.dump(2) + "\n");
            throw NumericError("run_stage: non-finite loss at step " + std::to_string(step) +
                               "; offending batch dumped to " + dump_path);
        }

        double lr = lr_schedule(step + 1, cfg.warmup_steps, cfg.base_lr);
        opt.step(lr);
        model.tau.clamp();

        json row = losses_json(acc);
        row["step"] = step;
        row["lr"] = lr;
        row["tau"] = model.tau.value();
        log << row.dump() << "\n";
        res.log.push_back(acc);
        ++res.updates;
    }
    log.flush();

    if (model.backbone.adapters_applied()) {
        model.backbone.merge_adapters();
        opt.rebind(model.parameters());
    }

    CheckpointMeta meta;
    meta.stage = cfg.stage;
    meta.global_step = cfg.steps;
    meta.adapter_rank = 0;  // merged above
    meta.adapter_scale = cfg.adapter_scale;
    meta.rng_state = batch_rng.serialize_state();
    meta.model_config_json = model_config_json(model.cfg);
    res.checkpoint_path = out_dir + "/stage" + std::to_string(cfg.stage) + ".ckpt";
    save_checkpoint(res.checkpoint_path, model, &opt, meta);
    return res;
}

}  // namespace ville
