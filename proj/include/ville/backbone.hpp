#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ville/ops.hpp"
#include "ville/tensor.hpp"
#include "ville/vocab.hpp"

namespace ville {

struct BackboneConfig {
    int64_t d_model = 32;
    int64_t n_layers = 2;
    int64_t n_heads = 2;
    int64_t vocab_size = 128;
    int64_t d_frame = 8;
    int64_t max_seq = 256;
    DType dtype = DType::f32;
    double init_std = 0.02;

    void validate() const;
};

// One slot of model input: either a discrete token or a raw frame-feature
// vector that gets linearly projected into the model width. Frames may only
// appear in the prefix.
struct TokenItem {
    int64_t token_id = -1;
    std::vector<double> frame;
    bool is_frame() const { return token_id < 0; }

    static TokenItem token(int64_t id) {
        TokenItem t;
        t.token_id = id;
        return t;
    }
    static TokenItem frame_item(std::vector<double> f) {
        TokenItem t;
        t.frame = std::move(f);
        return t;
    }
};

struct TokenSequence {
    std::vector<TokenItem> items;
    int64_t prefix_len = 0;

    int64_t size() const { return static_cast<int64_t>(items.size()); }
    void push_token(int64_t id) { items.push_back(TokenItem::token(id)); }
    void push_frame(std::vector<double> f) { items.push_back(TokenItem::frame_item(std::move(f))); }
    void validate(const BackboneConfig& cfg) const;
};

using FrameMatrix = std::vector<std::vector<double>>;

struct LinearW {
    Parameter w;  // [out, in]
    Parameter b;  // [out]
};

struct AdapterW {
    Parameter a;  // [rank, in]
    Parameter b;  // [out, rank], zero-init so the adapted model starts identical
};

// Decoder-only transformer with a prefix-LM mask: the prefix attends
// bidirectionally within itself, the suffix is causal and sees the whole
// prefix. Pre-LN blocks, GELU MLP, learned positions, untied output head.
class Backbone {
public:
    Backbone(const BackboneConfig& cfg, Rng& rng);

    const BackboneConfig& config() const { return cfg_; }

    // [prefix&prefix] | [suffix sees prefix and causal self], row-major len*len.
    static std::vector<uint8_t> prefix_lm_mask(int64_t prefix_len, int64_t len);

    Tensor embed_sequence(const TokenSequence& seq);
    Tensor encode(const TokenSequence& seq);        // [len, d_model], final LN applied
    Tensor logits(const Tensor& hidden);            // [rows, vocab]
    Tensor project_frames(const FrameMatrix& frames);  // [n, d_model]

    // Greedy decoding from the prefix; stops at EOS or max_steps. When
    // ignore_eos is set it always produces exactly max_steps tokens (the
    // fixed-token ablation). Returned ids include the terminating EOS.
    std::vector<int64_t> generate(const TokenSequence& prefix, int64_t max_steps,
                                  bool ignore_eos = false);

    std::vector<Parameter*> parameters();
    Parameter* find_param(const std::string& name);

    // Low-rank adapters on every attention/MLP linear (embeddings, frame
    // projector, and output head stay dense). apply twice or merge without
    // apply is a state error.
    void apply_adapters(int64_t rank, Rng& rng, double adapter_scale = 1.0);
    void merge_adapters();
    bool adapters_applied() const { return !adapters_.empty(); }
    int64_t adapter_rank() const { return adapter_rank_; }

private:
    struct Layer {
        LinearW wq, wk, wv, wo, w1, w2;
        Parameter ln1_g, ln1_b, ln2_g, ln2_b;
    };

    Tensor linear(const Tensor& x, LinearW& lw, AdapterW* ad);
    AdapterW* adapter_for(size_t linear_index);
    std::vector<LinearW*> adapter_targets();

    BackboneConfig cfg_;
    Parameter tok_embed_;   // [vocab, d]
    Parameter pos_embed_;   // [max_seq, d]
    LinearW frame_proj_;    // d_frame -> d
    std::vector<Layer> layers_;
    Parameter final_ln_g_, final_ln_b_;
    LinearW out_;           // d -> vocab
    std::vector<AdapterW> adapters_;  // parallel to adapter_targets() when applied
    int64_t adapter_rank_ = 0;
    double adapter_scale_ = 1.0;
};

}  // namespace ville
