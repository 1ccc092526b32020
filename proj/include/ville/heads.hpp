#pragma once

#include <string>
#include <vector>

#include "ville/backbone.hpp"

namespace ville {

// Pooling families for turning a variable-length run of decoder states into
// a fixed-size embedding:
//   attn_free  — plain mean of the states (1 pooled token)
//   self_attn  — one extra self-attention layer over the states (n tokens)
//   q_former   — P learned queries attend to the states (P tokens)
//   k_former   — learned keys only; states act as queries *and* values via
//                two-hop dictionary attention (n tokens, P*d params)
//   kv_former  — states query P learned key/value rows (n tokens, 2*P*d params)
enum class HeadVariant { AttnFree, SelfAttn, QFormer, KFormer, KvFormer };

HeadVariant parse_head_variant(const std::string& name);
std::string head_variant_name(HeadVariant v);

struct HeadConfig {
    HeadVariant variant = HeadVariant::KvFormer;
    int64_t d_model = 32;
    int64_t pooling_tokens = 16;  // P, used by the *_former variants
    int64_t mlp_hidden = 64;
    int64_t d_embed = 24;
    DType dtype = DType::f32;
    double init_std = 0.02;

    void validate() const;
};

class EmbedHead {
public:
    EmbedHead(const HeadConfig& cfg, Rng& rng);

    const HeadConfig& config() const { return cfg_; }

    Tensor pool(const Tensor& tokens);        // [n, d] -> [m, d]
    int64_t pooled_count(int64_t n) const;    // m for a given n

    // pool -> per-token MLP into embedding space -> mean -> L2 normalize
    Tensor head_embed(const Tensor& tokens);  // [n, d] -> [d_embed], unit norm

    std::vector<Parameter*> parameters();

private:
    HeadConfig cfg_;
    Parameter queries_;      // q_former: [P, d]
    Parameter keys_;         // k_former / kv_former: [P, d]
    Parameter values_;       // kv_former: [P, d]
    Parameter sa_q_, sa_k_, sa_v_;  // self_attn: [d, d] each
    Parameter mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

// ---------------------------------------------------------------------------
// Embedding pipeline shared by training (teacher-forced, differentiable) and
// inference (greedy generation under no-grad).

struct EmbeddingVector {
    std::vector<double> values;   // unit norm
    int64_t token_count = 0;      // how many decoder states fed the head
};

struct EmbedOptions {
    int64_t max_steps = 16;    // generation budget for video embeddings
    int64_t fixed_tokens = 0;  // >0: consume exactly this many states (ablation)
};

struct EmbedOut {
    Tensor unit;            // [d_embed], unit norm, graph-connected in grad mode
    int64_t token_count = 0;
};

EmbeddingVector finalize_embedding(const EmbedOut& e);

// Frames followed by the VID_EMBED trigger — the prompt shared by
// description, video embedding, and captioning training.
TokenSequence video_prefix(const FrameMatrix& frames);

// Video embedding, inference form: greedy-generate a description after the
// VID_EMBED trigger, then encode once more and pool the generated-token
// states (EOS included, trigger excluded).
EmbedOut embed_video_t(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                       const EmbedOptions& opt);
// Training form: the gold caption stands in for the generated tokens, so the
// whole path stays differentiable. caption excludes EOS; the head sees the
// caption states plus the EOS state.
EmbedOut embed_video_teacher_t(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                               const std::vector<int64_t>& caption, int64_t fixed_tokens = 0);
// Text embedding: [TXT_EMBED] + tokens, fully bidirectional; head sees the
// token states (trigger excluded).
EmbedOut embed_text_t(Backbone& bb, EmbedHead& head, const std::vector<int64_t>& tokens);
// Text conditioned on video context (also the composed-retrieval query form:
// source video + change text).
EmbedOut embed_contextual_text_t(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                                 const std::vector<int64_t>& tokens);

EmbeddingVector embed_video(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                            const EmbedOptions& opt);
EmbeddingVector embed_text(Backbone& bb, EmbedHead& head, const std::vector<int64_t>& tokens);
EmbeddingVector embed_contextual_text(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                                      const std::vector<int64_t>& tokens);
EmbeddingVector embed_composed(Backbone& bb, EmbedHead& head, const FrameMatrix& source_frames,
                               const std::vector<int64_t>& change_tokens);

}  // namespace ville
