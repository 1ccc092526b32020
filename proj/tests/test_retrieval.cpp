#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "ville/retrieval.hpp"
#include "ville/rng.hpp"

using namespace ville;
using namespace ville::testing;

namespace {

std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void spit(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("index construction and add guards") {
    CHECK_THROWS_AS(EmbeddingIndex(0), ArgumentError);

    EmbeddingIndex idx(3);
    CHECK(idx.dim() == 3);
    CHECK(idx.size() == 0);

    idx.add("a", {1.0, 0.0, 0.0});
    CHECK(idx.size() == 1);
    CHECK_THROWS_AS(idx.add("b", {1.0, 0.0}), ShapeError);
    CHECK_THROWS_AS(idx.add("a", {0.0, 1.0, 0.0}), DataError);
    CHECK_THROWS_AS(idx.add("z", {0.0, 0.0, 0.0}), DomainError);
}

TEST_CASE("entries are unit-normalized on insertion") {
    EmbeddingIndex idx(2);
    idx.add("long", {30.0, 40.0});  // same direction as {0.6, 0.8}
    const auto& v = idx.vec(0);
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-12));

    // magnitude cannot influence ranking once normalized
    idx.add("short", {0.06, 0.08});
    auto hits = idx.search({0.6, 0.8}, 2);
    CHECK(hits[0].second == doctest::Approx(hits[1].second).epsilon(1e-12));
}

TEST_CASE("search ranks by cosine, ties broken by ascending id") {
    EmbeddingIndex idx(2);
    idx.add("c", {1.0, 0.0});
    idx.add("a", {1.0, 0.0});   // exact tie with c
    idx.add("b", {0.0, 1.0});
    idx.add("d", {1.0, 1.0});

    auto hits = idx.search({1.0, 0.0}, 4);
    REQUIRE(hits.size() == 4);
    CHECK(hits[0].first == "a");  // tie resolved toward the smaller id
    CHECK(hits[1].first == "c");
    CHECK(hits[0].second == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hits[1].second == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hits[2].first == "d");
    CHECK(hits[2].second == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(hits[3].first == "b");
    CHECK(hits[3].second == doctest::Approx(0.0).epsilon(1e-12));

    SUBCASE("k clamps to the index size") {
        CHECK(idx.search({1.0, 0.0}, 100).size() == 4);
        CHECK(idx.search({1.0, 0.0}, 2).size() == 2);
    }
    SUBCASE("query guards") {
        CHECK_THROWS_AS(idx.search({1.0, 0.0}, 0), ArgumentError);
        CHECK_THROWS_AS(idx.search({1.0}, 3), ShapeError);
        CHECK_THROWS_AS(idx.search({0.0, 0.0}, 3), DomainError);
    }
}

TEST_CASE("empty index returns an empty hit list") {
    EmbeddingIndex idx(4);
    CHECK(idx.search({1.0, 0.0, 0.0, 0.0}, 5).empty());
}

TEST_CASE("ranking is independent of insertion order") {
    Rng rng(402);
    std::vector<std::vector<double>> vecs;
    for (int i = 0; i < 12; ++i) vecs.push_back(rng.gaussian_vec(5));

    EmbeddingIndex fwd(5), rev(5);
    for (int i = 0; i < 12; ++i) fwd.add("v" + std::to_string(i), vecs[static_cast<size_t>(i)]);
    for (int i = 11; i >= 0; --i) rev.add("v" + std::to_string(i), vecs[static_cast<size_t>(i)]);

    std::vector<double> q = rng.gaussian_vec(5);
    auto a = fwd.search(q, 12);
    auto b = rev.search(q, 12);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second == doctest::Approx(b[i].second).epsilon(1e-12));
    }
}

TEST_CASE("index file round trip preserves ids and rankings") {
    TempDir dir("index_roundtrip");
    std::string path = dir.path() + "/gallery.bin";

    Rng rng(403);
    EmbeddingIndex idx(6);
    for (int i = 0; i < 9; ++i) idx.add("vid" + std::to_string(i), rng.gaussian_vec(6));
    idx.save(path);

    EmbeddingIndex back = EmbeddingIndex::load(path);
    CHECK(back.dim() == 6);
    CHECK(back.size() == 9);
    CHECK(back.ids() == idx.ids());

    std::vector<double> q = rng.gaussian_vec(6);
    auto before = idx.search(q, 9);
    auto after = back.search(q, 9);
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].first == after[i].first);
        // payload is stored at 32-bit precision
        CHECK(after[i].second == doctest::Approx(before[i].second).epsilon(1e-6));
    }

    SUBCASE("re-save is byte-identical") {
        std::string path2 = dir.path() + "/gallery2.bin";
        back.save(path2);
        CHECK(slurp(path) == slurp(path2));
    }
}

TEST_CASE("index file corruption maps onto the error taxonomy") {
    TempDir dir("index_corrupt");
    std::string path = dir.path() + "/idx.bin";
    EmbeddingIndex idx(3);
    idx.add("a", {1.0, 2.0, 3.0});
    idx.add("b", {-1.0, 0.5, 0.25});
    idx.save(path);
    std::vector<uint8_t> good = slurp(path);

    SUBCASE("wrong magic") {
        auto bad = good;
        bad[0] = 'X';
        spit(path, bad);
        CHECK_THROWS_AS(EmbeddingIndex::load(path), DataError);
    }
    SUBCASE("unsupported version") {
        auto bad = good;
        bad[4] = 77;
        spit(path, bad);
        CHECK_THROWS_AS(EmbeddingIndex::load(path), VersionError);
    }
    SUBCASE("flipped payload byte fails the checksum") {
        auto bad = good;
        bad[bad.size() / 2] ^= 0x20;
        spit(path, bad);
        CHECK_THROWS_AS(EmbeddingIndex::load(path), IntegrityError);
    }
    SUBCASE("truncation") {
        auto bad = good;
        bad.resize(bad.size() - 7);
        spit(path, bad);
        CHECK_THROWS_AS(EmbeddingIndex::load(path), IntegrityError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(EmbeddingIndex::load(dir.path() + "/nope.bin"), IoError);
    }
}
