#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "ville/heads.hpp"
#include "ville/ops.hpp"

using namespace ville;
using namespace ville::testing;

namespace {

HeadConfig head_cfg(HeadVariant v) {
    HeadConfig c;
    c.variant = v;
    c.d_model = 16;
    c.pooling_tokens = 4;
    c.mlp_hidden = 8;
    c.d_embed = 6;
    c.dtype = DType::f64;
    c.init_std = 0.05;
    return c;
}

int64_t param_count(EmbedHead& h) {
    int64_t n = 0;
    for (Parameter* p : h.parameters()) n += p->tensor.numel();
    return n;
}

}  // namespace

TEST_CASE("variant names round-trip, unknown rejected") {
    for (HeadVariant v : {HeadVariant::AttnFree, HeadVariant::SelfAttn, HeadVariant::QFormer,
                          HeadVariant::KFormer, HeadVariant::KvFormer})
        CHECK(parse_head_variant(head_variant_name(v)) == v);
    CHECK_THROWS_AS((void)parse_head_variant("mega-former"), ConfigError);
}

TEST_CASE("pooled row counts per variant") {
    Rng rng(3);
    NoGradGuard ng;
    Tensor states = tensor_randn({7, 16}, DType::f64, rng, 1.0);
    struct Row {
        HeadVariant v;
        int64_t expect;  // for n=7, P=4
    };
    for (Row row : {Row{HeadVariant::AttnFree, 1}, Row{HeadVariant::SelfAttn, 7},
                    Row{HeadVariant::QFormer, 4}, Row{HeadVariant::KFormer, 7},
                    Row{HeadVariant::KvFormer, 7}}) {
        Rng hr(17);
        EmbedHead h(head_cfg(row.v), hr);
        CHECK(h.pooled_count(7) == row.expect);
        Tensor pooled = h.pool(states);
        CHECK(pooled.dim(0) == row.expect);
        CHECK(pooled.dim(1) == 16);
    }
}

TEST_CASE("attn-free pooling is exactly the row mean") {
    Rng rng(4);
    NoGradGuard ng;
    EmbedHead h(head_cfg(HeadVariant::AttnFree), rng);
    Tensor states = tensor_randn({5, 16}, DType::f64, rng, 1.0);
    Tensor pooled = h.pool(states);
    Tensor want = mean_rows(states);
    for (int64_t i = 0; i < 16; ++i)
        CHECK(pooled.val(i) == doctest::Approx(want.val(i)).epsilon(1e-12));
}

TEST_CASE("parameter budgets: dictionary heads own exactly their tables + MLP") {
    int64_t d = 16, P = 4, hid = 8, de = 6;
    int64_t mlp = hid * d + hid + de * hid + de;

    Rng r1(9), r2(9), r3(9), r4(9), r5(9);
    EmbedHead kv(head_cfg(HeadVariant::KvFormer), r1);
    CHECK(param_count(kv) == 2 * P * d + mlp);  // keys + values, nothing else

    EmbedHead kf(head_cfg(HeadVariant::KFormer), r2);
    CHECK(param_count(kf) == P * d + mlp);  // keys only

    EmbedHead qf(head_cfg(HeadVariant::QFormer), r3);
    CHECK(param_count(qf) == P * d + mlp);  // queries only

    EmbedHead af(head_cfg(HeadVariant::AttnFree), r4);
    CHECK(param_count(af) == mlp);  // mean needs no weights

    EmbedHead sa(head_cfg(HeadVariant::SelfAttn), r5);
    CHECK(param_count(sa) == 3 * d * d + mlp);  // q/k/v projections
}

TEST_CASE("head_embed produces a unit vector of width d_embed") {
    Rng rng(11);
    NoGradGuard ng;
    for (HeadVariant v : {HeadVariant::AttnFree, HeadVariant::SelfAttn, HeadVariant::QFormer,
                          HeadVariant::KFormer, HeadVariant::KvFormer}) {
        Rng hr(23);
        EmbedHead h(head_cfg(v), hr);
        Tensor states = tensor_randn({6, 16}, DType::f64, rng, 1.0);
        Tensor e = h.head_embed(states);
        CHECK(e.rank() == 1);
        CHECK(e.dim(0) == 6);
        double norm = 0;
        for (int64_t i = 0; i < e.numel(); ++i) norm += e.val(i) * e.val(i);
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("teacher-forced video embedding pools caption states plus EOS") {
    Rng rng(31);
    ModelConfig mc = tiny_model();
    Model m(mc, rng);
    FrameMatrix frames = random_frames(4, 4, rng);
    std::vector<int64_t> caption = {9, 10, 11};

    EmbedOut e = embed_video_teacher_t(m.backbone, m.head, frames, caption);
    CHECK(e.token_count == 4);  // 3 caption states + the EOS state
    CHECK(e.unit.dim(0) == mc.head.d_embed);

    // fixed budget below the natural count clamps...
    EmbedOut clamped = embed_video_teacher_t(m.backbone, m.head, frames, caption, 2);
    CHECK(clamped.token_count == 2);
    // ...and the clamped embedding is a genuinely different pooling
    double diff = 0;
    for (int64_t i = 0; i < e.unit.numel(); ++i)
        diff = std::max(diff, std::abs(e.unit.val(i) - clamped.unit.val(i)));
    CHECK(diff > 1e-9);
}

TEST_CASE("text embeddings pool the token states, trigger excluded") {
    Rng rng(37);
    Model m(tiny_model(), rng);
    std::vector<int64_t> tokens = {9, 12, 14};
    EmbeddingVector e = embed_text(m.backbone, m.head, tokens);
    CHECK(e.token_count == 3);
    CHECK(e.values.size() == 6);
    double norm = 0;
    for (double x : e.values) norm += x * x;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));

    FrameMatrix ctx = random_frames(3, 4, rng);
    EmbeddingVector ce = embed_contextual_text(m.backbone, m.head, ctx, tokens);
    CHECK(ce.token_count == 3);
    // the context must matter
    FrameMatrix ctx2 = ctx;
    ctx2[0][0] += 1.0;
    EmbeddingVector ce2 = embed_contextual_text(m.backbone, m.head, ctx2, tokens);
    double diff = 0;
    for (size_t i = 0; i < ce.values.size(); ++i)
        diff = std::max(diff, std::abs(ce.values[i] - ce2.values[i]));
    CHECK(diff > 1e-9);
}

TEST_CASE("inference video embedding: generate to EOS, then pool; fixed budget is exact") {
    Rng rng(41);
    Model m(tiny_model(), rng);
    FrameMatrix frames = random_frames(4, 4, rng);

    EmbedOptions opt;
    opt.max_steps = 6;
    EmbeddingVector a = embed_video(m.backbone, m.head, frames, opt);
    EmbeddingVector b = embed_video(m.backbone, m.head, frames, opt);
    CHECK(a.values == b.values);  // greedy path is deterministic
    CHECK(a.token_count >= 1);
    CHECK(a.token_count <= 6);

    EmbedOptions fixed1;
    fixed1.fixed_tokens = 1;
    CHECK(embed_video(m.backbone, m.head, frames, fixed1).token_count == 1);
    EmbedOptions fixed5;
    fixed5.fixed_tokens = 5;
    CHECK(embed_video(m.backbone, m.head, frames, fixed5).token_count == 5);
}

TEST_CASE("video_prefix is frames plus the trigger token, all prefix") {
    Rng rng(2);
    FrameMatrix frames = random_frames(3, 4, rng);
    TokenSequence s = video_prefix(frames);
    CHECK(s.size() == 4);
    CHECK(s.prefix_len == 4);
    CHECK(s.items[0].is_frame());
    CHECK(s.items[3].token_id == tok::VID_EMBED);
}

TEST_CASE("head config validation") {
    HeadConfig c = head_cfg(HeadVariant::KvFormer);
    c.pooling_tokens = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = head_cfg(HeadVariant::KvFormer);
    c.d_embed = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
