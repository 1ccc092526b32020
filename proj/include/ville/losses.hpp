#pragma once

#include <vector>

#include "ville/heads.hpp"

namespace ville {

// Softmax temperature shared by the contrastive losses. Learnable mode
// parameterizes log(tau) so positivity is free; value is clamped to
// [1e-3, 10] after every optimizer step.
class Temperature {
public:
    Temperature() = default;
    Temperature(double tau0, bool learnable, DType dt);

    double value() const;
    bool learnable() const { return learnable_; }
    Parameter* param() { return learnable_ ? &log_tau_ : nullptr; }
    // 1/tau as a graph node (constant when fixed).
    Tensor inv_tau();
    void clamp();
    void set_value(double tau);

    static constexpr double kMin = 1e-3;
    static constexpr double kMax = 10.0;

private:
    bool learnable_ = false;
    double fixed_tau_ = 0.07;
    DType dtype_ = DType::f32;
    Parameter log_tau_;
};

// One-directional InfoNCE over a batch of paired embeddings: each video row
// classifies its own caption against the batch. Rows are re-normalized
// defensively; a deviation beyond 1e-6 bumps *renorm_warnings. The symmetric
// (two-directional, averaged) form is available behind a flag and off by
// default.
Tensor retrieval_loss(const Tensor& video_embs, const Tensor& text_embs, Temperature& tau,
                      bool symmetric = false, int* renorm_warnings = nullptr);

// Teacher-forced next-token NLL summed over the target tokens, conditioned
// on an arbitrary prefix (video captioning and QA share this). Targets must
// not contain PAD; callers append EOS when the answer should terminate.
struct CaptionLossOut {
    Tensor sum;            // scalar, graph-connected
    int64_t n_tokens = 0;
    double per_token() const { return sum.scalar() / static_cast<double>(n_tokens); }
};
CaptionLossOut captioning_loss(Backbone& bb, const TokenSequence& prefix,
                               const std::vector<int64_t>& targets);

// Binary video-text matching: two-way softmax over the {Yes, No} logits at
// the answer position of [frames, caption, MATCH_PROMPT].
Tensor matching_loss(Backbone& bb, const FrameMatrix& frames, const std::vector<int64_t>& caption,
                     bool is_match);
// Raw logit(Yes) - logit(No) for re-ranking, computed under no-grad.
double matching_score(Backbone& bb, const FrameMatrix& frames,
                      const std::vector<int64_t>& caption);

// Hard-negative localization InfoNCE: positive clip vs mined low-IoU clips
// of the same video. A triplet with no negatives contributes zero.
struct LocTriplet {
    Tensor text;                 // [d_embed]
    Tensor positive;             // [d_embed]
    std::vector<Tensor> negatives;
};
Tensor localization_loss(const std::vector<LocTriplet>& triplets, Temperature& tau);

// Joint stage-1/2 video pass: one encode serves both the captioning loss and
// the teacher-forced video embedding.
struct JointCaptionEmbed {
    CaptionLossOut caption;
    EmbedOut video;
};
JointCaptionEmbed joint_caption_embed(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                                      const std::vector<int64_t>& caption,
                                      int64_t fixed_tokens = 0);

}  // namespace ville
