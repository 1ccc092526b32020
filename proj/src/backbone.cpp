#include "ville/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "ville/kernels.hpp"

namespace ville {

void BackboneConfig::validate() const {
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_frame < 1 || max_seq < 1)
        throw ConfigError("backbone: all dimensions must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("backbone: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (vocab_size < tok::FIRST_FREE)
        throw ConfigError("backbone: vocab_size must cover the reserved tokens");
}

void TokenSequence::validate(const BackboneConfig& cfg) const {
    if (items.empty()) throw ArgumentError("token sequence: empty");
    if (prefix_len < 0 || prefix_len > size())
        throw ArgumentError("token sequence: prefix_len " + std::to_string(prefix_len) +
                            " out of [0," + std::to_string(size()) + "]");
    if (size() > cfg.max_seq)
        throw CapacityError("token sequence: length " + std::to_string(size()) + " exceeds max_seq " +
                            std::to_string(cfg.max_seq));
    for (int64_t i = 0; i < size(); ++i) {
        const TokenItem& it = items[static_cast<size_t>(i)];
        if (it.is_frame()) {
            if (i >= prefix_len)
                throw ArgumentError("token sequence: frame at suffix position " + std::to_string(i));
            if (static_cast<int64_t>(it.frame.size()) != cfg.d_frame)
                throw ShapeError("token sequence: frame width " + std::to_string(it.frame.size()) +
                                 " != d_frame " + std::to_string(cfg.d_frame));
        } else if (it.token_id < 0 || it.token_id >= cfg.vocab_size) {
            throw IndexError("token sequence: token " + std::to_string(it.token_id) +
                             " out of vocab " + std::to_string(cfg.vocab_size));
        }
    }
}

namespace {

Parameter make_param(const std::string& name, std::vector<int64_t> shape, DType dt, Rng& rng,
                     double stddev) {
    Parameter p;
    p.name = name;
    p.tensor = stddev == 0.0 ? tensor_zeros(std::move(shape), dt, true)
                             : tensor_randn(std::move(shape), dt, rng, stddev, true);
    return p;
}

Parameter make_const_param(const std::string& name, std::vector<int64_t> shape, double value,
                           DType dt) {
    Parameter p;
    p.name = name;
    p.tensor = tensor_full(std::move(shape), value, dt, true);
    return p;
}

}  // namespace

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    DType dt = cfg_.dtype;
    double s = cfg_.init_std;
    tok_embed_ = make_param("embed.tok", {cfg_.vocab_size, cfg_.d_model}, dt, rng, s);
    pos_embed_ = make_param("embed.pos", {cfg_.max_seq, cfg_.d_model}, dt, rng, s);
    frame_proj_.w = make_param("frame_proj.w", {cfg_.d_model, cfg_.d_frame}, dt, rng, s);
    frame_proj_.b = make_param("frame_proj.b", {cfg_.d_model}, dt, rng, 0.0);
    layers_.resize(static_cast<size_t>(cfg_.n_layers));
    for (int64_t l = 0; l < cfg_.n_layers; ++l) {
        Layer& L = layers_[static_cast<size_t>(l)];
        std::string pre = "layer" + std::to_string(l) + ".";
        auto lin = [&](const std::string& nm, int64_t out, int64_t in) {
            LinearW w;
            w.w = make_param(pre + nm + ".w", {out, in}, dt, rng, s);
            w.b = make_param(pre + nm + ".b", {out}, dt, rng, 0.0);
            return w;
        };
        L.wq = lin("wq", cfg_.d_model, cfg_.d_model);
        L.wk = lin("wk", cfg_.d_model, cfg_.d_model);
        L.wv = lin("wv", cfg_.d_model, cfg_.d_model);
        L.wo = lin("wo", cfg_.d_model, cfg_.d_model);
        L.w1 = lin("w1", 4 * cfg_.d_model, cfg_.d_model);
        L.w2 = lin("w2", cfg_.d_model, 4 * cfg_.d_model);
        L.ln1_g = make_const_param(pre + "ln1.g", {cfg_.d_model}, 1.0, dt);
        L.ln1_b = make_const_param(pre + "ln1.b", {cfg_.d_model}, 0.0, dt);
        L.ln2_g = make_const_param(pre + "ln2.g", {cfg_.d_model}, 1.0, dt);
        L.ln2_b = make_const_param(pre + "ln2.b", {cfg_.d_model}, 0.0, dt);
    }
    final_ln_g_ = make_const_param("final_ln.g", {cfg_.d_model}, 1.0, dt);
    final_ln_b_ = make_const_param("final_ln.b", {cfg_.d_model}, 0.0, dt);
    out_.w = make_param("out.w", {cfg_.vocab_size, cfg_.d_model}, dt, rng, s);
    out_.b = make_param("out.b", {cfg_.vocab_size}, dt, rng, 0.0);
}

std::vector<uint8_t> Backbone::prefix_lm_mask(int64_t prefix_len, int64_t len) {
    if (len < 1) throw ArgumentError("prefix_lm_mask: empty sequence");
    if (prefix_len < 0 || prefix_len > len)
        throw ArgumentError("prefix_lm_mask: prefix " + std::to_string(prefix_len) + " of " +
                            std::to_string(len));
    std::vector<uint8_t> mask(static_cast<size_t>(len * len), 0);
    for (int64_t i = 0; i < len; ++i)
        for (int64_t j = 0; j < len; ++j) {
            bool allowed = i < prefix_len ? (j < prefix_len) : (j <= i);
            mask[static_cast<size_t>(i * len + j)] = allowed ? 1 : 0;
        }
    return mask;
}

std::vector<LinearW*> Backbone::adapter_targets() {
    std::vector<LinearW*> t;
    for (auto& L : layers_) {
        t.push_back(&L.wq);
        t.push_back(&L.wk);
        t.push_back(&L.wv);
        t.push_back(&L.wo);
        t.push_back(&L.w1);
        t.push_back(&L.w2);
    }
    return t;
}

AdapterW* Backbone::adapter_for(size_t linear_index) {
    if (adapters_.empty()) return nullptr;
    return &adapters_[linear_index];
}

Tensor Backbone::linear(const Tensor& x, LinearW& lw, AdapterW* ad) {
    Tensor y = add_bias(matmul(x, lw.w.tensor, false, true), lw.b.tensor);
    if (ad) {
        Tensor low = matmul(matmul(x, ad->a.tensor, false, true), ad->b.tensor, false, true);
        y = add(y, adapter_scale_ == 1.0 ? low : scale(low, adapter_scale_));
    }
    return y;
}

Tensor Backbone::project_frames(const FrameMatrix& frames) {
    if (frames.empty()) throw ArgumentError("project_frames: no frames");
    int64_t n = static_cast<int64_t>(frames.size());
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(n * cfg_.d_frame));
    for (const auto& f : frames) {
        if (static_cast<int64_t>(f.size()) != cfg_.d_frame)
            throw ShapeError("project_frames: frame width " + std::to_string(f.size()) +
                             " != d_frame " + std::to_string(cfg_.d_frame));
        flat.insert(flat.end(), f.begin(), f.end());
    }
    Tensor raw = tensor_from(flat, {n, cfg_.d_frame}, cfg_.dtype, false);
    return linear(raw, frame_proj_, nullptr);
}

Tensor Backbone::embed_sequence(const TokenSequence& seq) {
    seq.validate(cfg_);
    // Group consecutive items of one kind into a single lookup / projection.
    std::vector<Tensor> parts;
    size_t i = 0;
    const size_t n = seq.items.size();
    while (i < n) {
        if (seq.items[i].is_frame()) {
            FrameMatrix run;
            while (i < n && seq.items[i].is_frame()) run.push_back(seq.items[i++].frame);
            parts.push_back(project_frames(run));
        } else {
            std::vector<int64_t> ids;
            while (i < n && !seq.items[i].is_frame()) ids.push_back(seq.items[i++].token_id);
            parts.push_back(gather_rows(tok_embed_.tensor, ids));
        }
    }
    Tensor emb = parts.size() == 1 ? parts[0] : concat_rows(parts);
    Tensor pos = slice_rows(pos_embed_.tensor, 0, seq.size());
    return add(emb, pos);
}

Tensor Backbone::encode(const TokenSequence& seq) {
    Tensor x = embed_sequence(seq);
    int64_t len = seq.size();
    std::vector<uint8_t> mask = prefix_lm_mask(seq.prefix_len, len);
    double att_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model / cfg_.n_heads));
    for (size_t l = 0; l < layers_.size(); ++l) {
        Layer& L = layers_[l];
        size_t base = l * 6;
        Tensor h = layer_norm(x, L.ln1_g.tensor, L.ln1_b.tensor);
        Tensor q = linear(h, L.wq, adapter_for(base + 0));
        Tensor k = linear(h, L.wk, adapter_for(base + 1));
        Tensor v = linear(h, L.wv, adapter_for(base + 2));
        Tensor att = attention(q, k, v, cfg_.n_heads, &mask, att_scale);
        x = add(x, linear(att, L.wo, adapter_for(base + 3)));
        Tensor m = layer_norm(x, L.ln2_g.tensor, L.ln2_b.tensor);
        m = linear(gelu(linear(m, L.w1, adapter_for(base + 4))), L.w2, adapter_for(base + 5));
        x = add(x, m);
    }
    return layer_norm(x, final_ln_g_.tensor, final_ln_b_.tensor);
}

Tensor Backbone::logits(const Tensor& hidden) {
    return add_bias(matmul(hidden, out_.w.tensor, false, true), out_.b.tensor);
}

std::vector<int64_t> Backbone::generate(const TokenSequence& prefix, int64_t max_steps,
                                        bool ignore_eos) {
    if (max_steps < 1) throw ArgumentError("generate: max_steps must be >= 1");
    if (prefix.prefix_len != prefix.size())
        throw ArgumentError("generate: sequence must be all prefix");
    NoGradGuard ng;
    TokenSequence seq = prefix;
    std::vector<int64_t> out;
    for (int64_t step = 0; step < max_steps; ++step) {
        if (seq.size() + 1 > cfg_.max_seq)
            throw CapacityError("generate: sequence would exceed max_seq " +
                                std::to_string(cfg_.max_seq));
        Tensor hidden = encode(seq);
        Tensor last = slice_rows(hidden, seq.size() - 1, 1);
        Tensor lg = logits(last);
        // argmax with lowest-id tie break
        int64_t best = 0;
        double best_v = lg.val(0);
        for (int64_t j = 1; j < lg.dim(1); ++j)
            if (lg.val(j) > best_v) {
                best_v = lg.val(j);
                best = j;
            }
        out.push_back(best);
        seq.push_token(best);
        if (!ignore_eos && best == tok::EOS) break;
    }
    return out;
}

std::vector<Parameter*> Backbone::parameters() {
    std::vector<Parameter*> ps;
    ps.push_back(&tok_embed_);
    ps.push_back(&pos_embed_);
    ps.push_back(&frame_proj_.w);
    ps.push_back(&frame_proj_.b);
    for (auto& L : layers_) {
        for (LinearW* lw : {&L.wq, &L.wk, &L.wv, &L.wo, &L.w1, &L.w2}) {
            ps.push_back(&lw->w);
            ps.push_back(&lw->b);
        }
        ps.push_back(&L.ln1_g);
        ps.push_back(&L.ln1_b);
        ps.push_back(&L.ln2_g);
        ps.push_back(&L.ln2_b);
    }
    ps.push_back(&final_ln_g_);
    ps.push_back(&final_ln_b_);
    ps.push_back(&out_.w);
    ps.push_back(&out_.b);
    for (auto& ad : adapters_) {
        ps.push_back(&ad.a);
        ps.push_back(&ad.b);
    }
    return ps;
}

Parameter* Backbone::find_param(const std::string& name) {
    for (Parameter* p : parameters())
        if (p->name == name) return p;
    return nullptr;
}

void Backbone::apply_adapters(int64_t rank, Rng& rng, double adapter_scale) {
    if (adapters_applied()) throw StateError("apply_adapters: adapters already applied");
    if (rank < 1) throw ArgumentError("apply_adapters: rank must be >= 1");
    auto targets = adapter_targets();
    adapters_.reserve(targets.size());
    for (LinearW* lw : targets) {
        int64_t out = lw->w.tensor.dim(0), in = lw->w.tensor.dim(1);
        AdapterW ad;
        ad.a = make_param(lw->w.name + ".lora_a", {rank, in}, cfg_.dtype, rng, cfg_.init_std);
        ad.b = make_param(lw->w.name + ".lora_b", {out, rank}, cfg_.dtype, rng, 0.0);
        adapters_.push_back(std::move(ad));
    }
    adapter_rank_ = rank;
    adapter_scale_ = adapter_scale;
}

void Backbone::merge_adapters() {
    if (!adapters_applied()) throw StateError("merge_adapters: no adapters applied");
    NoGradGuard ng;
    auto targets = adapter_targets();
    for (size_t i = 0; i < targets.size(); ++i) {
        LinearW* lw = targets[i];
        AdapterW& ad = adapters_[i];
        int64_t out = lw->w.tensor.dim(0), in = lw->w.tensor.dim(1);
        int64_t r = adapter_rank_;
        // W += scale * B @ A, computed directly on the buffers.
        if (cfg_.dtype == DType::f32) {
            gemm<float>(out, in, r, ad.b.tensor.data_f32().data(), r, false,
                        ad.a.tensor.data_f32().data(), in, false, lw->w.tensor.data_f32().data(),
                        in, static_cast<float>(adapter_scale_), 1.0f);
        } else {
            gemm<double>(out, in, r, ad.b.tensor.data_f64().data(), r, false,
                         ad.a.tensor.data_f64().data(), in, false, lw->w.tensor.data_f64().data(),
                         in, adapter_scale_, 1.0);
        }
    }
    adapters_.clear();
    adapter_rank_ = 0;
    adapter_scale_ = 1.0;
}

}  // namespace ville
