#include <doctest.h>

#include <cmath>

#include "ville/metrics.hpp"
#include "ville/rng.hpp"
#include "ville/temporal.hpp"

using namespace ville;

TEST_CASE("interval IoU") {
    CHECK(interval_iou({0, 10}, {0, 10}) == doctest::Approx(1.0));
    CHECK(interval_iou({0, 10}, {10, 20}) == doctest::Approx(0.0));
    CHECK(interval_iou({0, 10}, {5, 15}) == doctest::Approx(5.0 / 15.0));
    CHECK(interval_iou({0, 0}, {0, 0}) == doctest::Approx(0.0));  // degenerate union
    // symmetry and range on random pairs
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        double a0 = rng.uniform(0, 50), a1 = a0 + rng.uniform(0, 20);
        double b0 = rng.uniform(0, 50), b1 = b0 + rng.uniform(0, 20);
        double ab = interval_iou({a0, a1}, {b0, b1});
        CHECK(ab == doctest::Approx(interval_iou({b0, b1}, {a0, a1})));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
    }
}

TEST_CASE("window enumeration: full grid plus clamped tail") {
    WindowConfig cfg;  // 10 / 5
    auto w = window_clips(60, cfg);
    REQUIRE(w.size() == 11);  // starts 0,5,...,50; coverage reaches 60 exactly
    for (size_t i = 0; i < w.size(); ++i) {
        CHECK(w[i].first == doctest::Approx(5.0 * static_cast<double>(i)));
        CHECK(w[i].second == doctest::Approx(w[i].first + 10.0));
    }

    // 23s: full windows at 0,5,10 then a clamped [15,23] tail
    auto t = window_clips(23, cfg);
    REQUIRE(t.size() == 4);
    CHECK(t[3].first == doctest::Approx(15.0));
    CHECK(t[3].second == doctest::Approx(23.0));

    // shorter than one window: a single clamped span covering everything
    auto s = window_clips(7, cfg);
    REQUIRE(s.size() == 1);
    CHECK(s[0].first == 0.0);
    CHECK(s[0].second == doctest::Approx(7.0));

    CHECK_THROWS_AS((void)window_clips(-1, cfg), ArgumentError);
    WindowConfig bad;
    bad.stride_s = 0;
    CHECK_THROWS_AS((void)window_clips(10, bad), ArgumentError);
}

TEST_CASE("window grids always cover the duration") {
    Rng rng(31);
    for (int i = 0; i < 100; ++i) {
        WindowConfig cfg;
        cfg.window_s = rng.uniform(2, 20);
        cfg.stride_s = rng.uniform(1, cfg.window_s);
        double dur = rng.uniform(5, 90);
        auto w = window_clips(dur, cfg);
        REQUIRE(!w.empty());
        CHECK(w.front().first == 0.0);
        CHECK(w.back().second == doctest::Approx(dur).epsilon(1e-9));
        for (size_t j = 1; j < w.size(); ++j) {
            CHECK(w[j].first > w[j - 1].first);           // strictly advancing
            CHECK(w[j].first <= w[j - 1].second + 1e-9);  // no gaps
        }
    }
}

TEST_CASE("seed_merge hand cases") {
    WindowConfig wc;  // 10/5
    SeedMergeParams p;
    p.tau_merge = 0.7;
    p.alpha = 0.5;

    // the acceptance-pinned example: seed at 1, right neighbor joins via
    // relative rule (0.6 >= 0.45), left and far-right fail
    auto windows = window_clips(25, wc);  // 0-10,5-15,10-20,15-25
    MergedSpan m = seed_merge({0.1, 0.9, 0.6, 0.2}, windows, p, wc.stride_s);
    CHECK(m.seed_index == 1);
    CHECK(m.first_index == 1);
    CHECK(m.last_index == 2);
    CHECK(m.seed_score == doctest::Approx(0.9));
    // seed keeps its left edge, non-seed right boundary pulls in stride/2
    CHECK(m.start_s == doctest::Approx(5.0));
    CHECK(m.end_s == doctest::Approx(17.5));

    // tie goes to the lowest index
    MergedSpan tied = seed_merge({0.5, 0.5}, window_clips(15, wc), p, wc.stride_s);
    CHECK(tied.seed_index == 0);

    // single window: span is the window, untouched
    MergedSpan solo = seed_merge({0.4}, window_clips(8, wc), p, wc.stride_s);
    CHECK(solo.start_s == doctest::Approx(0.0));
    CHECK(solo.end_s == doctest::Approx(8.0));

    CHECK_THROWS_AS((void)seed_merge({}, {}, p, 5.0), ArgumentError);
    CHECK_THROWS_AS((void)seed_merge({0.1, 0.2}, window_clips(8, wc), p, wc.stride_s),
                    ShapeError);
}

TEST_CASE("merge never grows past the first failure") {
    WindowConfig wc;
    SeedMergeParams p;
    p.tau_merge = 0.8;
    p.alpha = 0.9;
    // window 2 is the seed; window 1 fails both rules, so window 0 must be
    // unreachable even though it would pass
    auto windows = window_clips(30, wc);
    MergedSpan m = seed_merge({0.95, 0.1, 1.0, 0.1, 0.1}, windows, p, wc.stride_s);
    CHECK(m.first_index == 2);
    CHECK(m.last_index == 2);
}

TEST_CASE("seed_merge agrees with the independent oracle on 1000 fuzz cases") {
    Rng rng(424242);
    WindowConfig wc;
    int mismatches = 0;
    for (int it = 0; it < 1000; ++it) {
        int64_t n = rng.uniform_int(1, 14);
        std::vector<double> scores;
        for (int64_t i = 0; i < n; ++i) scores.push_back(rng.uniform(-0.2, 1.0));
        SeedMergeParams p;
        p.tau_merge = rng.uniform(0.0, 1.0);
        p.alpha = rng.uniform(0.0, 1.0);
        double duration = 10.0 + wc.stride_s * static_cast<double>(n - 1);
        auto windows = window_clips(duration, wc);
        REQUIRE(static_cast<int64_t>(windows.size()) == n);

        MergedSpan got = seed_merge(scores, windows, p, wc.stride_s);
        auto want = oracle_seed_merge(scores, p.tau_merge, p.alpha);
        if (got.first_index != want.first || got.last_index != want.second) ++mismatches;
    }
    CHECK(mismatches == 0);
}

TEST_CASE("center correction trims only non-seed boundaries, clamped to the seed") {
    WindowConfig wc;
    SeedMergeParams loose;
    loose.tau_merge = 0.0;
    loose.alpha = 0.0;
    auto windows = window_clips(30, wc);  // 5 windows
    // everything merges; both boundary windows are non-seed -> trim both ends
    MergedSpan all = seed_merge({0.5, 0.5, 0.9, 0.5, 0.5}, windows, loose, wc.stride_s);
    CHECK(all.first_index == 0);
    CHECK(all.last_index == 4);
    CHECK(all.start_s == doctest::Approx(0.0 + 2.5));
    CHECK(all.end_s == doctest::Approx(30.0 - 2.5));

    // seed at the left boundary: left edge stays, right edge trims
    MergedSpan left = seed_merge({0.9, 0.5, 0.5, 0.5, 0.5}, windows, loose, wc.stride_s);
    CHECK(left.start_s == doctest::Approx(0.0));
    CHECK(left.end_s == doctest::Approx(27.5));
}
