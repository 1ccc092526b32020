#include "ville/config.hpp"

#include <cstdlib>

#include <json.hpp>

#include "ville/io.hpp"

namespace ville {

using nlohmann::json;

namespace {

json stage_doc(const StageConfig& s) {
    json j;
    j["steps"] = s.steps;
    j["base_lr"] = s.base_lr;
    j["warmup_steps"] = s.warmup_steps;
    j["grad_accum"] = s.grad_accum;
    j["adapter_rank"] = s.adapter_rank;
    j["adapter_scale"] = s.adapter_scale;
    j["batch_size"] = s.batch_size;
    j["qa_batch"] = s.qa_batch;
    j["match_batch"] = s.match_batch;
    j["loc_batch"] = s.loc_batch;
    j["composed_fraction"] = s.composed_fraction;
    j["weights"]["cap"] = s.weights.cap;
    j["weights"]["qa"] = s.weights.qa;
    j["weights"]["ret"] = s.weights.ret;
    j["weights"]["match"] = s.weights.match;
    j["weights"]["loc"] = s.weights.loc;
    j["optimizer"] = s.optimizer;
    j["weight_decay"] = s.weight_decay;
    j["freeze_base"] = s.freeze_base;
    j["symmetric_ret"] = s.symmetric_ret;
    j["fixed_embed_tokens"] = s.fixed_embed_tokens;
    j["sparse_ctx_frames"] = s.sparse_ctx_frames;
    j["loc_windows"]["window_s"] = s.loc_windows.window_s;
    j["loc_windows"]["stride_s"] = s.loc_windows.stride_s;
    return j;
}

void stage_from_doc(const json& j, StageConfig& s) {
    s.steps = j.at("steps");
    s.base_lr = j.at("base_lr");
    s.warmup_steps = j.at("warmup_steps");
    s.grad_accum = j.at("grad_accum");
    s.adapter_rank = j.at("adapter_rank");
    s.adapter_scale = j.at("adapter_scale");
    s.batch_size = j.at("batch_size");
    s.qa_batch = j.at("qa_batch");
    s.match_batch = j.at("match_batch");
    s.loc_batch = j.at("loc_batch");
    s.composed_fraction = j.at("composed_fraction");
    s.weights.cap = j.at("weights").at("cap");
    s.weights.qa = j.at("weights").at("qa");
    s.weights.ret = j.at("weights").at("ret");
    s.weights.match = j.at("weights").at("match");
    s.weights.loc = j.at("weights").at("loc");
    s.optimizer = j.at("optimizer");
    s.weight_decay = j.at("weight_decay");
    s.freeze_base = j.at("freeze_base");
    s.symmetric_ret = j.at("symmetric_ret");
    s.fixed_embed_tokens = j.at("fixed_embed_tokens");
    s.sparse_ctx_frames = j.at("sparse_ctx_frames");
    s.loc_windows.window_s = j.at("loc_windows").at("window_s");
    s.loc_windows.stride_s = j.at("loc_windows").at("stride_s");
}

json full_doc(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out"] = c.out;

    json& co = j["corpus"];
    co["n_videos"] = c.corpus.n_videos;
    co["n_symbols"] = c.corpus.n_symbols;
    co["d_frame"] = c.corpus.d_frame;
    co["fps"] = c.corpus.fps;
    co["duration_min_s"] = c.corpus.duration_min_s;
    co["duration_max_s"] = c.corpus.duration_max_s;
    co["min_events"] = c.corpus.min_events;
    co["max_events"] = c.corpus.max_events;
    co["event_min_s"] = c.corpus.event_min_s;
    co["event_max_s"] = c.corpus.event_max_s;
    co["gap_min_s"] = c.corpus.gap_min_s;
    co["gap_max_s"] = c.corpus.gap_max_s;
    co["noise_sigma"] = c.corpus.noise_sigma;
    co["symbol_scale"] = c.corpus.symbol_scale;
    co["twin_fraction"] = c.corpus.twin_fraction;
    co["time_bucket_s"] = c.corpus.time_bucket_s;
    co["holdout"] = c.corpus.holdout;

    json& b = j["model"]["backbone"];
    b["d_model"] = c.model.backbone.d_model;
    b["n_layers"] = c.model.backbone.n_layers;
    b["n_heads"] = c.model.backbone.n_heads;
    b["vocab_size"] = c.model.backbone.vocab_size;  // 0 = derive from corpus
    b["d_frame"] = c.model.backbone.d_frame;        // 0 = derive from corpus
    b["max_seq"] = c.model.backbone.max_seq;
    b["dtype"] = dtype_name(c.model.backbone.dtype);
    b["init_std"] = c.model.backbone.init_std;
    json& h = j["model"]["head"];
    h["variant"] = head_variant_name(c.model.head.variant);
    h["pooling_tokens"] = c.model.head.pooling_tokens;
    h["mlp_hidden"] = c.model.head.mlp_hidden;
    h["d_embed"] = c.model.head.d_embed;
    h["init_std"] = c.model.head.init_std;
    j["model"]["tau"] = c.model.tau;
    j["model"]["learnable_tau"] = c.model.learnable_tau;

    j["stage1"] = stage_doc(c.stage1);
    j["stage2"] = stage_doc(c.stage2);
    j["stage3"] = stage_doc(c.stage3);

    j["window"]["window_s"] = c.window.window_s;
    j["window"]["stride_s"] = c.window.stride_s;
    j["merge"]["tau_merge"] = c.merge.tau_merge;
    j["merge"]["alpha"] = c.merge.alpha;
    j["embed"]["max_steps"] = c.embed.max_steps;
    j["embed"]["fixed_tokens"] = c.embed.fixed_tokens;
    j["retrieval_k"] = c.retrieval_k;
    j["rerank_k"] = c.rerank_k;
    j["loc_top_n"] = c.loc_top_n;
    j["sparse_ctx_frames"] = c.sparse_ctx_frames;
    return j;
}

RunConfig from_doc(const json& j) {
    RunConfig c = default_run_config();
    c.seed = j.at("seed");
    c.out = j.at("out");

    const json& co = j.at("corpus");
    c.corpus.n_videos = co.at("n_videos");
    c.corpus.n_symbols = co.at("n_symbols");
    c.corpus.d_frame = co.at("d_frame");
    c.corpus.fps = co.at("fps");
    c.corpus.duration_min_s = co.at("duration_min_s");
    c.corpus.duration_max_s = co.at("duration_max_s");
    c.corpus.min_events = co.at("min_events");
    c.corpus.max_events = co.at("max_events");
    c.corpus.event_min_s = co.at("event_min_s");
    c.corpus.event_max_s = co.at("event_max_s");
    c.corpus.gap_min_s = co.at("gap_min_s");
    c.corpus.gap_max_s = co.at("gap_max_s");
    c.corpus.noise_sigma = co.at("noise_sigma");
    c.corpus.symbol_scale = co.at("symbol_scale");
    c.corpus.twin_fraction = co.at("twin_fraction");
    c.corpus.time_bucket_s = co.at("time_bucket_s");
    c.corpus.holdout = co.at("holdout");

    const json& b = j.at("model").at("backbone");
    c.model.backbone.d_model = b.at("d_model");
    c.model.backbone.n_layers = b.at("n_layers");
    c.model.backbone.n_heads = b.at("n_heads");
    c.model.backbone.vocab_size = b.at("vocab_size");
    c.model.backbone.d_frame = b.at("d_frame");
    c.model.backbone.max_seq = b.at("max_seq");
    std::string dt = b.at("dtype");
    if (dt != "f32" && dt != "f64") throw ConfigError("model.backbone.dtype: unknown '" + dt + "'");
    c.model.backbone.dtype = dt == "f64" ? DType::f64 : DType::f32;
    c.model.backbone.init_std = b.at("init_std");
    const json& h = j.at("model").at("head");
    c.model.head.variant = parse_head_variant(h.at("variant"));
    c.model.head.pooling_tokens = h.at("pooling_tokens");
    c.model.head.mlp_hidden = h.at("mlp_hidden");
    c.model.head.d_embed = h.at("d_embed");
    c.model.head.init_std = h.at("init_std");
    c.model.tau = j.at("model").at("tau");
    c.model.learnable_tau = j.at("model").at("learnable_tau");

    stage_from_doc(j.at("stage1"), c.stage1);
    stage_from_doc(j.at("stage2"), c.stage2);
    stage_from_doc(j.at("stage3"), c.stage3);
    c.stage1.stage = 1;
    c.stage2.stage = 2;
    c.stage3.stage = 3;

    c.window.window_s = j.at("window").at("window_s");
    c.window.stride_s = j.at("window").at("stride_s");
    c.merge.tau_merge = j.at("merge").at("tau_merge");
    c.merge.alpha = j.at("merge").at("alpha");
    c.embed.max_steps = j.at("embed").at("max_steps");
    c.embed.fixed_tokens = j.at("embed").at("fixed_tokens");
    c.retrieval_k = j.at("retrieval_k");
    c.rerank_k = j.at("rerank_k");
    c.loc_top_n = j.at("loc_top_n");
    c.sparse_ctx_frames = j.at("sparse_ctx_frames");
    return c;
}

std::string json_type_name(const json& v) {
    if (v.is_object()) return "object";
    if (v.is_array()) return "array";
    if (v.is_string()) return "string";
    if (v.is_boolean()) return "bool";
    if (v.is_number_float()) return "float";
    if (v.is_number_unsigned()) return "non-negative integer";
    if (v.is_number()) return "integer";
    return "null";
}

// Overlay user values onto the defaults document, rejecting anything the
// defaults don't know about — the dotted path makes typos findable.
void merge_strict(json& base, const json& user, const std::string& path) {
    if (!user.is_object())
        throw ConfigError("config: expected object at " + (path.empty() ? "<root>" : path));
    for (auto it = user.begin(); it != user.end(); ++it) {
        std::string here = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + here + "'");
        json& slot = base[it.key()];
        const json& v = it.value();
        if (slot.is_object()) {
            merge_strict(slot, v, here);
            continue;
        }
        // is_number_integer() covers unsigned values too, so split the cases
        // by hand: unsigned slots (the seed) must refuse negatives outright.
        bool slot_uint = slot.is_number_unsigned();
        bool slot_int = slot.is_number_integer() && !slot_uint;
        bool ok = (slot.is_string() && v.is_string()) || (slot.is_boolean() && v.is_boolean()) ||
                  (slot.is_number_float() && v.is_number()) ||
                  (slot_int && v.is_number_integer()) ||
                  (slot_uint && v.is_number_unsigned());
        if (!ok)
            throw ConfigError("config: '" + here + "' expects " + json_type_name(slot) + ", got " +
                              json_type_name(v));
        slot = v;
    }
}

}  // namespace

void RunConfig::validate() const {
    corpus.validate();
    stage1.validate();
    stage2.validate();
    stage3.validate();
    if (window.stride_s <= 0 || window.stride_s > window.window_s)
        throw ConfigError("window: need 0 < stride_s <= window_s");
    if (merge.alpha <= 0 || merge.alpha > 1) throw ConfigError("merge: alpha must be in (0,1]");
    if (retrieval_k < 1) throw ConfigError("retrieval_k must be >= 1");
    if (rerank_k < 1) throw ConfigError("rerank_k must be >= 1");
    if (loc_top_n < 1) throw ConfigError("loc_top_n must be >= 1");
    if (sparse_ctx_frames < 1) throw ConfigError("sparse_ctx_frames must be >= 1");
    if (embed.max_steps < 1) throw ConfigError("embed.max_steps must be >= 1");
    if (embed.fixed_tokens < 0) throw ConfigError("embed.fixed_tokens must be >= 0");
    if (out.empty()) throw ConfigError("out directory must not be empty");
}

RunConfig default_run_config() {
    RunConfig c;
    c.model.backbone.vocab_size = 0;  // derive from corpus
    c.model.backbone.d_frame = 0;

    c.stage1.stage = 1;
    c.stage1.steps = 3000;
    c.stage1.warmup_steps = 100;
    c.stage1.adapter_rank = 8;

    c.stage2.stage = 2;
    c.stage2.steps = 500;
    c.stage2.warmup_steps = 50;
    c.stage2.adapter_rank = 8;

    c.stage3.stage = 3;
    c.stage3.steps = 1000;
    c.stage3.warmup_steps = 50;
    c.stage3.adapter_rank = 4;
    return c;
}

RunConfig run_config_from_json_text(const std::string& text, const std::string& origin) {
    json user = json::parse(text, nullptr, false);
    if (user.is_discarded()) throw ConfigError(origin + ": not valid JSON");
    json doc = full_doc(default_run_config());
    merge_strict(doc, user, "");
    RunConfig c = from_doc(doc);
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    return run_config_from_json_text(read_text_file(path), path);
}

std::string run_config_echo(const RunConfig& cfg) { return full_doc(cfg).dump(2) + "\n"; }

ModelConfig resolved_model(const RunConfig& cfg) {
    ModelConfig m = cfg.model;
    if (m.backbone.vocab_size == 0) {
        Vocab v{cfg.corpus.time_buckets(), cfg.corpus.n_symbols};
        m.backbone.vocab_size = v.size();
    }
    if (m.backbone.d_frame == 0) m.backbone.d_frame = cfg.corpus.d_frame;
    m.head.d_model = m.backbone.d_model;
    m.head.dtype = m.backbone.dtype;
    m.validate();
    return m;
}

void apply_env_overrides(RunConfig& cfg) {
    if (const char* s = std::getenv("VILLE_SEED")) {
        try {
            size_t used = 0;
            std::string str(s);
            uint64_t v = std::stoull(str, &used);
            if (used != str.size()) throw std::invalid_argument("trailing");
            cfg.seed = v;
        } catch (const std::exception&) {
            throw ConfigError(std::string("VILLE_SEED: cannot parse '") + s + "'");
        }
    }
    if (const char* o = std::getenv("VILLE_OUT")) {
        if (*o == '\0') throw ConfigError("VILLE_OUT: empty");
        cfg.out = o;
    }
}

}  // namespace ville
