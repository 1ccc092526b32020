#include "ville/heads.hpp"

#include <cmath>

namespace ville {

HeadVariant parse_head_variant(const std::string& name) {
    if (name == "attn-free") return HeadVariant::AttnFree;
    if (name == "self-attn") return HeadVariant::SelfAttn;
    if (name == "q-former") return HeadVariant::QFormer;
    if (name == "k-former") return HeadVariant::KFormer;
    if (name == "kv-former") return HeadVariant::KvFormer;
    throw ConfigError("unknown head variant '" + name + "'");
}

std::string head_variant_name(HeadVariant v) {
    switch (v) {
        case HeadVariant::AttnFree: return "attn-free";
        case HeadVariant::SelfAttn: return "self-attn";
        case HeadVariant::QFormer: return "q-former";
        case HeadVariant::KFormer: return "k-former";
        case HeadVariant::KvFormer: return "kv-former";
    }
    throw ConfigError("unknown head variant");
}

void HeadConfig::validate() const {
    if (d_model < 1 || mlp_hidden < 1 || d_embed < 1)
        throw ConfigError("embed head: dimensions must be positive");
    if (pooling_tokens < 1) throw ConfigError("embed head: pooling_tokens must be >= 1");
}

EmbedHead::EmbedHead(const HeadConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    DType dt = cfg_.dtype;
    double s = cfg_.init_std;
    auto mk = [&](const char* name, std::vector<int64_t> shape, double std_) {
        Parameter p;
        p.name = name;
        p.tensor = std_ == 0.0 ? tensor_zeros(std::move(shape), dt, true)
                               : tensor_randn(std::move(shape), dt, rng, std_, true);
        p.decay = true;  // the head is the only weight-decayed part of the model
        return p;
    };
    switch (cfg_.variant) {
        case HeadVariant::AttnFree:
            break;
        case HeadVariant::SelfAttn:
            sa_q_ = mk("head.sa_q", {cfg_.d_model, cfg_.d_model}, s);
            sa_k_ = mk("head.sa_k", {cfg_.d_model, cfg_.d_model}, s);
            sa_v_ = mk("head.sa_v", {cfg_.d_model, cfg_.d_model}, s);
            break;
        case HeadVariant::QFormer:
            queries_ = mk("head.queries", {cfg_.pooling_tokens, cfg_.d_model}, s);
            break;
        case HeadVariant::KFormer:
            keys_ = mk("head.keys", {cfg_.pooling_tokens, cfg_.d_model}, s);
            break;
        case HeadVariant::KvFormer:
            keys_ = mk("head.keys", {cfg_.pooling_tokens, cfg_.d_model}, s);
            values_ = mk("head.values", {cfg_.pooling_tokens, cfg_.d_model}, s);
            break;
    }
    mlp_w1_ = mk("head.mlp_w1", {cfg_.mlp_hidden, cfg_.d_model}, s);
    mlp_b1_ = mk("head.mlp_b1", {cfg_.mlp_hidden}, 0.0);
    mlp_w2_ = mk("head.mlp_w2", {cfg_.d_embed, cfg_.mlp_hidden}, s);
    mlp_b2_ = mk("head.mlp_b2", {cfg_.d_embed}, 0.0);
}

int64_t EmbedHead::pooled_count(int64_t n) const {
    switch (cfg_.variant) {
        case HeadVariant::AttnFree: return 1;
        case HeadVariant::QFormer: return cfg_.pooling_tokens;
        default: return n;
    }
}

Tensor EmbedHead::pool(const Tensor& tokens) {
    if (tokens.rank() != 2 || tokens.dim(1) != cfg_.d_model)
        throw ShapeError("embed head: expected [n," + std::to_string(cfg_.d_model) + "], got " +
                         shape_to_string(tokens.shape()));
    if (tokens.dim(0) < 1) throw ArgumentError("embed head: no token states to pool");
    double sc = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    switch (cfg_.variant) {
        case HeadVariant::AttnFree:
            return reshape(mean_rows(tokens), {1, cfg_.d_model});
        case HeadVariant::SelfAttn: {
            Tensor q = matmul(tokens, sa_q_.tensor, false, true);
            Tensor k = matmul(tokens, sa_k_.tensor, false, true);
            Tensor v = matmul(tokens, sa_v_.tensor, false, true);
            return add(tokens, attention(q, k, v, 1, nullptr, sc));
        }
        case HeadVariant::QFormer:
            return attention(queries_.tensor, tokens, tokens, 1, nullptr, sc);
        case HeadVariant::KFormer: {
            // Two-hop dictionary attention: states write into the key slots
            // (column softmax) and read back out of them (row softmax), so the
            // only learned state is the P key rows.
            Tensor s = scale(matmul(tokens, keys_.tensor, false, true), sc);  // [n, P]
            Tensor read = softmax_rows(s);                                    // rows: over P
            Tensor write = softmax_rows(transpose(s));                        // cols: over n
            return matmul(matmul(read, write), tokens);                       // [n, d]
        }
        case HeadVariant::KvFormer:
            return attention(tokens, keys_.tensor, values_.tensor, 1, nullptr, sc);
    }
    throw StateError("embed head: bad variant");
}

Tensor EmbedHead::head_embed(const Tensor& tokens) {
    Tensor pooled = pool(tokens);
    Tensor h = gelu(add_bias(matmul(pooled, mlp_w1_.tensor, false, true), mlp_b1_.tensor));
    Tensor e = add_bias(matmul(h, mlp_w2_.tensor, false, true), mlp_b2_.tensor);
    return l2_normalize(mean_rows(e));
}

std::vector<Parameter*> EmbedHead::parameters() {
    std::vector<Parameter*> ps;
    auto push = [&](Parameter& p) {
        if (p.tensor.defined()) ps.push_back(&p);
    };
    push(queries_);
    push(keys_);
    push(values_);
    push(sa_q_);
    push(sa_k_);
    push(sa_v_);
    push(mlp_w1_);
    push(mlp_b1_);
    push(mlp_w2_);
    push(mlp_b2_);
    return ps;
}

// ------------------------------------------------------------------ pipeline

EmbeddingVector finalize_embedding(const EmbedOut& e) {
    EmbeddingVector v;
    v.values = e.unit.to_vector();
    v.token_count = e.token_count;
    return v;
}

TokenSequence video_prefix(const FrameMatrix& frames) {
    TokenSequence seq;
    for (const auto& f : frames) seq.push_frame(f);
    seq.push_token(tok::VID_EMBED);
    seq.prefix_len = seq.size();
    return seq;
}

EmbedOut embed_video_t(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                       const EmbedOptions& opt) {
    if (opt.max_steps < 1) throw ArgumentError("embed_video: max_steps must be >= 1");
    TokenSequence prefix = video_prefix(frames);
    int64_t budget = opt.fixed_tokens > 0 ? opt.fixed_tokens : opt.max_steps;
    std::vector<int64_t> generated = bb.generate(prefix, budget, opt.fixed_tokens > 0);
    TokenSequence seq = prefix;
    for (int64_t id : generated) seq.push_token(id);
    Tensor hidden = bb.encode(seq);
    Tensor states = slice_rows(hidden, prefix.size(), static_cast<int64_t>(generated.size()));
    EmbedOut out;
    out.unit = head.head_embed(states);
    out.token_count = static_cast<int64_t>(generated.size());
    return out;
}

EmbedOut embed_video_teacher_t(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                               const std::vector<int64_t>& caption, int64_t fixed_tokens) {
    TokenSequence seq = video_prefix(frames);
    int64_t p = seq.size();
    for (int64_t id : caption) seq.push_token(id);
    seq.push_token(tok::EOS);
    Tensor hidden = bb.encode(seq);
    int64_t avail = static_cast<int64_t>(caption.size()) + 1;
    int64_t take = fixed_tokens > 0 ? std::min(fixed_tokens, avail) : avail;
    Tensor states = slice_rows(hidden, p, take);
    EmbedOut out;
    out.unit = head.head_embed(states);
    out.token_count = take;
    return out;
}

EmbedOut embed_text_t(Backbone& bb, EmbedHead& head, const std::vector<int64_t>& tokens) {
    if (tokens.empty()) throw ArgumentError("embed_text: empty token list");
    TokenSequence seq;
    seq.push_token(tok::TXT_EMBED);
    for (int64_t id : tokens) seq.push_token(id);
    seq.prefix_len = seq.size();  // fully bidirectional
    Tensor hidden = bb.encode(seq);
    Tensor states = slice_rows(hidden, 1, static_cast<int64_t>(tokens.size()));
    EmbedOut out;
    out.unit = head.head_embed(states);
    out.token_count = static_cast<int64_t>(tokens.size());
    return out;
}

EmbedOut embed_contextual_text_t(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                                 const std::vector<int64_t>& tokens) {
    if (tokens.empty()) throw ArgumentError("embed_contextual_text: empty token list");
    if (frames.empty()) throw ArgumentError("embed_contextual_text: no frames");
    TokenSequence seq;
    for (const auto& f : frames) seq.push_frame(f);
    seq.push_token(tok::TXT_EMBED);
    int64_t first_text = seq.size();
    for (int64_t id : tokens) seq.push_token(id);
    seq.prefix_len = seq.size();
    Tensor hidden = bb.encode(seq);
    Tensor states = slice_rows(hidden, first_text, static_cast<int64_t>(tokens.size()));
    EmbedOut out;
    out.unit = head.head_embed(states);
    out.token_count = static_cast<int64_t>(tokens.size());
    return out;
}

EmbeddingVector embed_video(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                            const EmbedOptions& opt) {
    NoGradGuard ng;
    return finalize_embedding(embed_video_t(bb, head, frames, opt));
}

EmbeddingVector embed_text(Backbone& bb, EmbedHead& head, const std::vector<int64_t>& tokens) {
    NoGradGuard ng;
    return finalize_embedding(embed_text_t(bb, head, tokens));
}

EmbeddingVector embed_contextual_text(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                                      const std::vector<int64_t>& tokens) {
    NoGradGuard ng;
    return finalize_embedding(embed_contextual_text_t(bb, head, frames, tokens));
}

EmbeddingVector embed_composed(Backbone& bb, EmbedHead& head, const FrameMatrix& source_frames,
                               const std::vector<int64_t>& change_tokens) {
    return embed_contextual_text(bb, head, source_frames, change_tokens);
}

}  // namespace ville
