#include <doctest.h>

#include "test_support.hpp"
#include "ville/backbone.hpp"
#include "ville/ops.hpp"

using namespace ville;
using namespace ville::testing;

TEST_CASE("prefix-LM mask: bidirectional prefix, causal suffix over full prefix") {
    auto m = Backbone::prefix_lm_mask(2, 4);
    REQUIRE(m.size() == 16);
    auto at = [&](int64_t i, int64_t j) { return m[static_cast<size_t>(i * 4 + j)]; };
    // prefix rows see the whole prefix and nothing else
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 4; ++j) CHECK(at(i, j) == (j < 2 ? 1 : 0));
    // suffix rows see prefix plus themselves-and-earlier
    for (int64_t i = 2; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) CHECK(at(i, j) == (j <= i ? 1 : 0));

    // degenerate prefixes: 0 -> pure causal, len -> fully bidirectional
    auto causal = Backbone::prefix_lm_mask(0, 3);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j)
            CHECK(causal[static_cast<size_t>(i * 3 + j)] == (j <= i ? 1 : 0));
    auto full = Backbone::prefix_lm_mask(3, 3);
    CHECK(std::count(full.begin(), full.end(), 1) == 9);
}

TEST_CASE("token sequence validation") {
    BackboneConfig cfg = tiny_backbone();
    TokenSequence s;
    CHECK_THROWS_AS(s.validate(cfg), ArgumentError);  // empty

    s.push_frame(std::vector<double>(4, 0.1));
    s.push_token(tok::VID_EMBED);
    s.prefix_len = 2;
    CHECK_NOTHROW(s.validate(cfg));

    s.prefix_len = 5;
    CHECK_THROWS_AS(s.validate(cfg), ArgumentError);  // prefix beyond end

    s.prefix_len = 1;
    s.push_frame(std::vector<double>(4, 0.1));  // frame in the suffix
    CHECK_THROWS_AS(s.validate(cfg), ArgumentError);

    TokenSequence bad_tok;
    bad_tok.push_token(cfg.vocab_size);
    bad_tok.prefix_len = 0;
    CHECK_THROWS_AS(bad_tok.validate(cfg), IndexError);

    TokenSequence bad_frame;
    bad_frame.push_frame(std::vector<double>(3, 0.0));  // wrong width
    bad_frame.prefix_len = 1;
    CHECK_THROWS_AS(bad_frame.validate(cfg), ShapeError);

    TokenSequence long_seq;
    for (int64_t i = 0; i < cfg.max_seq + 1; ++i) long_seq.push_token(tok::PAD);
    long_seq.prefix_len = 0;
    CHECK_THROWS_AS(long_seq.validate(cfg), CapacityError);
}

TEST_CASE("encode is deterministic and the mask actually gates information") {
    Rng rng(21);
    BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);

    TokenSequence seq;
    Rng frng(4);
    for (int i = 0; i < 3; ++i) seq.push_frame(frng.gaussian_vec(cfg.d_frame));
    seq.push_token(tok::VID_EMBED);
    seq.prefix_len = 4;
    for (int64_t t : {9, 10, 11}) seq.push_token(t);

    NoGradGuard ng;
    Tensor h1 = bb.encode(seq);
    CHECK(h1.dim(0) == 7);
    CHECK(h1.dim(1) == cfg.d_model);
    Tensor h2 = bb.encode(seq);
    for (int64_t i = 0; i < h1.numel(); ++i) CHECK(h1.val(i) == h2.val(i));

    // editing the final suffix token must leave every earlier state untouched
    TokenSequence edited = seq;
    edited.items.back() = TokenItem::token(12);
    Tensor h3 = bb.encode(edited);
    for (int64_t i = 0; i < 6 * cfg.d_model; ++i) CHECK(h3.val(i) == h1.val(i));
    // ...and editing a prefix frame must reach everything, suffix included
    TokenSequence pedited = seq;
    pedited.items[0].frame[0] += 1.0;
    Tensor h4 = bb.encode(pedited);
    double delta = 0;
    for (int64_t i = 6 * cfg.d_model; i < 7 * cfg.d_model; ++i)
        delta = std::max(delta, std::abs(h4.val(i) - h1.val(i)));
    CHECK(delta > 0.0);
}

TEST_CASE("greedy generation contract") {
    Rng rng(31);
    BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);

    TokenSequence prefix;
    prefix.push_frame(std::vector<double>(4, 0.3));
    prefix.push_token(tok::VID_EMBED);
    prefix.prefix_len = 2;

    auto a = bb.generate(prefix, 6);
    auto b = bb.generate(prefix, 6);
    CHECK(a == b);  // greedy + fixed weights = reproducible
    CHECK(a.size() <= 6);
    for (int64_t t : a) {
        CHECK(t >= 0);
        CHECK(t < cfg.vocab_size);
    }
    if (a.size() < 6) CHECK(a.back() == tok::EOS);

    auto forced = bb.generate(prefix, 6, true);
    CHECK(forced.size() == 6);  // ignore_eos pushes through the stop token

    CHECK_THROWS_AS((void)bb.generate(prefix, 0), ArgumentError);
    TokenSequence with_suffix = prefix;
    with_suffix.push_token(9);
    CHECK_THROWS_AS((void)bb.generate(with_suffix, 3), ArgumentError);

    BackboneConfig small = cfg;
    small.max_seq = 3;
    Backbone tiny(small, rng);
    TokenSequence full;
    full.push_token(9);
    full.push_token(10);
    full.push_token(11);
    full.prefix_len = 3;
    CHECK_THROWS_AS((void)tiny.generate(full, 2), CapacityError);
}

TEST_CASE("parameters are named and findable") {
    Rng rng(8);
    Backbone bb(tiny_backbone(), rng);
    CHECK(bb.find_param("embed.tok") != nullptr);
    CHECK(bb.find_param("embed.pos") != nullptr);
    CHECK(bb.find_param("frame_proj.w") != nullptr);
    CHECK(bb.find_param("layer0.wq.w") != nullptr);
    CHECK(bb.find_param("layer0.w2.b") != nullptr);
    CHECK(bb.find_param("out.w") != nullptr);
    CHECK(bb.find_param("nope") == nullptr);
    for (Parameter* p : bb.parameters()) {
        CHECK_FALSE(p->name.empty());
        CHECK(p->tensor.requires_grad());
    }
}

TEST_CASE("adapters: zero at birth, exact after merge") {
    Rng rng(13);
    BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);

    TokenSequence seq;
    seq.push_frame(std::vector<double>(4, 0.2));
    seq.push_token(tok::VID_EMBED);
    seq.prefix_len = 2;
    seq.push_token(9);

    NoGradGuard ng;
    Tensor before = bb.encode(seq);

    Rng arng(77);
    bb.apply_adapters(2, arng);
    CHECK(bb.adapters_applied());
    CHECK(bb.adapter_rank() == 2);
    CHECK_THROWS_AS(bb.apply_adapters(2, arng), StateError);

    // B is zero-initialized, so the adapted model starts as the same function
    Tensor at_birth = bb.encode(seq);
    for (int64_t i = 0; i < before.numel(); ++i)
        CHECK(at_birth.val(i) == doctest::Approx(before.val(i)).epsilon(1e-12));

    // push the adapters off zero, then check merge preserves the function
    int64_t touched = 0;
    for (Parameter* p : bb.parameters()) {
        if (p->name.find(".lora_") == std::string::npos) continue;
        ++touched;
        for (int64_t i = 0; i < p->tensor.numel(); ++i)
            p->tensor.set_val(i, p->tensor.val(i) + 0.01 * static_cast<double>((i % 5) - 2));
    }
    CHECK(touched > 0);
    Tensor adapted = bb.encode(seq);
    bb.merge_adapters();
    CHECK_FALSE(bb.adapters_applied());
    CHECK_THROWS_AS(bb.merge_adapters(), StateError);
    Tensor merged = bb.encode(seq);
    for (int64_t i = 0; i < merged.numel(); ++i)
        CHECK(merged.val(i) == doctest::Approx(adapted.val(i)).epsilon(1e-9));

    // adapters must have moved the function, or the merge check proved nothing
    double moved = 0;
    for (int64_t i = 0; i < merged.numel(); ++i)
        moved = std::max(moved, std::abs(merged.val(i) - before.val(i)));
    CHECK(moved > 1e-6);
}

TEST_CASE("frame projection shape") {
    Rng rng(5);
    Backbone bb(tiny_backbone(), rng);
    NoGradGuard ng;
    FrameMatrix frames = random_frames(3, 4, rng);
    Tensor p = bb.project_frames(frames);
    CHECK(p.dim(0) == 3);
    CHECK(p.dim(1) == 16);
}
