#include "ville/losses.hpp"

#include <cmath>

namespace ville {

Temperature::Temperature(double tau0, bool learnable, DType dt)
    : learnable_(learnable), fixed_tau_(tau0), dtype_(dt) {
    if (tau0 < kMin || tau0 > kMax)
        throw ConfigError("temperature: tau " + std::to_string(tau0) + " outside [" +
                          std::to_string(kMin) + "," + std::to_string(kMax) + "]");
    if (learnable_) {
        log_tau_.name = "loss.log_tau";
        log_tau_.tensor = tensor_from({std::log(tau0)}, {1}, dt, true);
    }
}

double Temperature::value() const {
    return learnable_ ? std::exp(log_tau_.tensor.val(0)) : fixed_tau_;
}

Tensor Temperature::inv_tau() {
    if (learnable_) return exp_t(neg(log_tau_.tensor));
    return tensor_from({1.0 / fixed_tau_}, {1}, dtype_, false);
}

void Temperature::clamp() {
    if (!learnable_) return;
    double v = log_tau_.tensor.val(0);
    double lo = std::log(kMin), hi = std::log(kMax);
    if (v < lo) log_tau_.tensor.set_val(0, lo);
    if (v > hi) log_tau_.tensor.set_val(0, hi);
}

void Temperature::set_value(double tau) {
    if (tau < kMin || tau > kMax) throw ConfigError("temperature: tau out of range");
    if (learnable_)
        log_tau_.tensor.set_val(0, std::log(tau));
    else
        fixed_tau_ = tau;
}

namespace {

// Re-normalize rows, counting rows that were off unit length.
Tensor renormalize(const Tensor& embs, int* warnings) {
    if (warnings) {
        int64_t m = embs.dim(0), d = embs.dim(1);
        for (int64_t i = 0; i < m; ++i) {
            double sq = 0;
            for (int64_t j = 0; j < d; ++j) {
                double v = embs.val(i * d + j);
                sq += v * v;
            }
            if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) ++(*warnings);
        }
    }
    return l2_normalize_rows(embs);
}

std::vector<int64_t> iota_targets(int64_t n) {
    std::vector<int64_t> t(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) t[static_cast<size_t>(i)] = i;
    return t;
}

}  // namespace

Tensor retrieval_loss(const Tensor& video_embs, const Tensor& text_embs, Temperature& tau,
                      bool symmetric, int* renorm_warnings) {
    if (video_embs.rank() != 2 || text_embs.rank() != 2)
        throw ShapeError("retrieval_loss: expected [N,d] embeddings");
    if (video_embs.shape() != text_embs.shape())
        throw ShapeError("retrieval_loss: " + shape_to_string(video_embs.shape()) + " vs " +
                         shape_to_string(text_embs.shape()));
    int64_t n = video_embs.dim(0);
    if (n < 1) throw ArgumentError("retrieval_loss: empty batch");
    Tensor v = renormalize(video_embs, renorm_warnings);
    Tensor t = renormalize(text_embs, renorm_warnings);
    Tensor logits = mul_scalar_tensor(matmul(v, t, false, true), tau.inv_tau());
    Tensor loss = scale(cross_entropy_rows(logits, iota_targets(n)), 1.0 / static_cast<double>(n));
    if (symmetric) {
        Tensor rev = scale(cross_entropy_rows(transpose(logits), iota_targets(n)),
                           1.0 / static_cast<double>(n));
        loss = scale(add(loss, rev), 0.5);
    }
    return loss;
}

CaptionLossOut captioning_loss(Backbone& bb, const TokenSequence& prefix,
                               const std::vector<int64_t>& targets) {
    if (targets.empty()) throw ArgumentError("captioning_loss: no targets");
    if (prefix.size() < 1 || prefix.prefix_len != prefix.size())
        throw ArgumentError("captioning_loss: conditioning sequence must be a non-empty prefix");
    for (int64_t t : targets)
        if (t == tok::PAD) throw ArgumentError("captioning_loss: PAD in targets");
    TokenSequence seq = prefix;
    for (int64_t t : targets) seq.push_token(t);
    Tensor hidden = bb.encode(seq);
    int64_t p = prefix.size();
    int64_t L = static_cast<int64_t>(targets.size());
    // Row p-1 predicts targets[0]; row p+k-1 predicts targets[k].
    Tensor rows = slice_rows(hidden, p - 1, L);
    CaptionLossOut out;
    out.sum = cross_entropy_rows(bb.logits(rows), targets);
    out.n_tokens = L;
    return out;
}

namespace {

TokenSequence matching_sequence(const FrameMatrix& frames, const std::vector<int64_t>& caption,
                                const BackboneConfig& cfg) {
    if (frames.empty()) throw ArgumentError("matching: no frames");
    if (caption.empty()) throw ArgumentError("matching: empty caption");
    if (cfg.vocab_size <= tok::NO)
        throw ConfigError("matching: vocab does not contain yes/no tokens");
    TokenSequence seq;
    for (const auto& f : frames) seq.push_frame(f);
    for (int64_t id : caption) seq.push_token(id);
    seq.push_token(tok::MATCH_PROMPT);
    seq.prefix_len = seq.size();  // the question is context, answered bidirectionally
    return seq;
}

}  // namespace

Tensor matching_loss(Backbone& bb, const FrameMatrix& frames, const std::vector<int64_t>& caption,
                     bool is_match) {
    TokenSequence seq = matching_sequence(frames, caption, bb.config());
    Tensor hidden = bb.encode(seq);
    Tensor lg = bb.logits(slice_rows(hidden, seq.size() - 1, 1));
    // Two-way renormalized softmax over the yes/no logits only.
    Tensor yn = pick(lg, 0, {tok::YES, tok::NO});
    return softmax_cross_entropy(yn, is_match ? 0 : 1);
}

double matching_score(Backbone& bb, const FrameMatrix& frames,
                      const std::vector<int64_t>& caption) {
    NoGradGuard ng;
    TokenSequence seq = matching_sequence(frames, caption, bb.config());
    Tensor hidden = bb.encode(seq);
    Tensor lg = bb.logits(slice_rows(hidden, seq.size() - 1, 1));
    return lg.val(tok::YES) - lg.val(tok::NO);
}

Tensor localization_loss(const std::vector<LocTriplet>& triplets, Temperature& tau) {
    if (triplets.empty()) throw ArgumentError("localization_loss: no triplets");
    DType dt = triplets[0].text.dtype();
    Tensor total = tensor_zeros({1}, dt, false);
    for (const auto& tr : triplets) {
        if (tr.negatives.empty()) continue;  // -log(1) = 0
        std::vector<Tensor> cands;
        cands.push_back(reshape(tr.positive, {1, tr.positive.dim(0)}));
        for (const auto& ng : tr.negatives) cands.push_back(reshape(ng, {1, ng.dim(0)}));
        Tensor c = l2_normalize_rows(concat_rows(cands));
        Tensor q = reshape(l2_normalize(tr.text), {1, tr.text.dim(0)});
        Tensor sims = matmul(q, c, false, true);  // [1, 1+k]
        Tensor logits = mul_scalar_tensor(sims, tau.inv_tau());
        total = add(total, cross_entropy_rows(logits, {0}));
    }
    return scale(total, 1.0 / static_cast<double>(triplets.size()));
}

JointCaptionEmbed joint_caption_embed(Backbone& bb, EmbedHead& head, const FrameMatrix& frames,
                                      const std::vector<int64_t>& caption, int64_t fixed_tokens) {
    if (caption.empty()) throw ArgumentError("joint_caption_embed: empty caption");
    for (int64_t t : caption)
        if (t == tok::PAD || t == tok::EOS)
            throw ArgumentError("joint_caption_embed: caption must exclude PAD/EOS");
    TokenSequence seq;
    for (const auto& f : frames) seq.push_frame(f);
    seq.push_token(tok::VID_EMBED);
    int64_t p = seq.size();
    seq.prefix_len = p;  // frames + trigger are bidirectional, caption is causal
    std::vector<int64_t> targets = caption;
    targets.push_back(tok::EOS);
    for (int64_t t : targets) seq.push_token(t);
    Tensor hidden = bb.encode(seq);
    int64_t L = static_cast<int64_t>(targets.size());
    JointCaptionEmbed out;
    out.caption.sum = cross_entropy_rows(bb.logits(slice_rows(hidden, p - 1, L)), targets);
    out.caption.n_tokens = L;
    int64_t take = fixed_tokens > 0 ? std::min(fixed_tokens, L) : L;
    out.video.unit = head.head_embed(slice_rows(hidden, p, take));
    out.video.token_count = take;
    return out;
}

}  // namespace ville
