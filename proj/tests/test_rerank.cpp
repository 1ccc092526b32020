#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "ville/rerank.hpp"
#include "ville/rng.hpp"

using namespace ville;

namespace {

std::vector<std::string> names(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("v" + std::to_string(i));
    return out;
}

}  // namespace

TEST_CASE("rerank re-sorts the scored block and keeps the tail order") {
    std::vector<std::string> first = {"a", "b", "c", "d", "e"};
    std::map<std::string, double> score = {{"a", 0.1}, {"b", 0.9}, {"c", 0.5}};

    auto out = two_stage_rerank(first, 3, [&](const std::string& id) { return score.at(id); });
    REQUIRE(out.size() == 5);
    CHECK(out[0].first == "b");
    CHECK(out[1].first == "c");
    CHECK(out[2].first == "a");
    CHECK(out[0].second == 0.9);

    // beyond-K candidates were never scored
    CHECK(out[3].first == "d");
    CHECK(out[4].first == "e");
    CHECK(std::isnan(out[3].second));
    CHECK(std::isnan(out[4].second));
}

TEST_CASE("output is a permutation of the input") {
    Rng rng(61);
    std::vector<std::string> first = names(20);
    for (int trial = 0; trial < 10; ++trial) {
        int64_t k = 1 + rng.uniform_int(0, 24);  // sometimes > n
        std::map<std::string, double> score;
        for (const auto& id : first) score[id] = rng.uniform();
        auto out = two_stage_rerank(first, k, [&](const std::string& id) { return score.at(id); });
        REQUIRE(out.size() == first.size());
        std::vector<std::string> got;
        for (const auto& [id, s] : out) got.push_back(id);
        std::vector<std::string> want = first;
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        CHECK(got == want);
    }
}

TEST_CASE("an oracle matcher pulls the buried truth to rank one") {
    std::vector<std::string> first = names(30);
    std::string truth = "v17";  // rank 18 in first-stage order
    auto oracle = [&](const std::string& id) { return id == truth ? 1.0 : 0.0; };
    auto out = two_stage_rerank(first, 25, oracle);
    CHECK(out[0].first == truth);

    SUBCASE("but not when the truth sits below the rerank window") {
        std::string deep = "v29";
        auto oracle2 = [&](const std::string& id) { return id == deep ? 1.0 : 0.0; };
        auto out2 = two_stage_rerank(first, 25, oracle2);
        CHECK(out2[29].first == deep);  // untouched tail keeps its position
    }
}

TEST_CASE("K at least n reranks everything; ties keep first-stage order") {
    std::vector<std::string> first = {"x", "y", "z"};
    auto flat = [](const std::string&) { return 0.25; };
    auto out = two_stage_rerank(first, 100, flat);
    REQUIRE(out.size() == 3);
    CHECK(out[0].first == "x");  // stable sort: equal scores preserve order
    CHECK(out[1].first == "y");
    CHECK(out[2].first == "z");
    for (const auto& [id, s] : out) CHECK(s == 0.25);
}

TEST_CASE("rerank guards") {
    auto one = [](const std::string&) { return 0.0; };
    CHECK_THROWS_AS(two_stage_rerank({"a"}, 0, one), ArgumentError);
    CHECK_THROWS_AS(two_stage_rerank({"a"}, -3, one), ArgumentError);
    CHECK(two_stage_rerank({}, 5, one).empty());
}

TEST_CASE("scoring only touches the top K candidates") {
    std::vector<std::string> first = names(10);
    int calls = 0;
    auto counting = [&](const std::string&) {
        ++calls;
        return 0.0;
    };
    two_stage_rerank(first, 4, counting);
    CHECK(calls == 4);
}
