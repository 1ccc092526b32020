#include <doctest.h>

#include <cmath>

#include "ville/ops.hpp"

using namespace ville;

namespace {
Tensor vec(const std::vector<double>& v, bool rg = false) {
    return tensor_from(v, {static_cast<int64_t>(v.size())}, DType::f64, rg);
}
}  // namespace

TEST_CASE("elementwise arithmetic") {
    Tensor a = vec({1, 2, 3});
    Tensor b = vec({4, 5, 6});
    CHECK(add(a, b).to_vector() == std::vector<double>{5, 7, 9});
    CHECK(sub(a, b).to_vector() == std::vector<double>{-3, -3, -3});
    CHECK(mul(a, b).to_vector() == std::vector<double>{4, 10, 18});
    CHECK(scale(a, -2.0).to_vector() == std::vector<double>{-2, -4, -6});
    CHECK(neg(a).to_vector() == std::vector<double>{-1, -2, -3});
    CHECK(exp_t(vec({0.0, 1.0})).val(1) == doctest::Approx(std::exp(1.0)));
    CHECK_THROWS_AS((void)add(a, vec({1, 2})), ShapeError);
}

TEST_CASE("matmul against hand values, both transpose flags") {
    Tensor a = tensor_from({1, 2, 3, 4, 5, 6}, {2, 3}, DType::f64);
    Tensor b = tensor_from({7, 8, 9, 10, 11, 12}, {3, 2}, DType::f64);
    Tensor c = matmul(a, b);  // [2,2]
    CHECK(c.to_vector() == std::vector<double>{58, 64, 139, 154});

    // a^T path: [3,2]^T @ [3,2] = a_t rows are columns of a
    Tensor at = transpose(a);  // [3,2]
    Tensor c2 = matmul(at, b, true, false);  // back to a @ b
    CHECK(c2.to_vector() == std::vector<double>{58, 64, 139, 154});

    Tensor bt = transpose(b);  // [2,3]
    Tensor c3 = matmul(a, bt, false, true);
    CHECK(c3.to_vector() == std::vector<double>{58, 64, 139, 154});

    CHECK_THROWS_AS((void)matmul(a, a), ShapeError);
}

TEST_CASE("transpose and add_bias") {
    Tensor a = tensor_from({1, 2, 3, 4, 5, 6}, {2, 3}, DType::f64);
    CHECK(transpose(a).to_vector() == std::vector<double>{1, 4, 2, 5, 3, 6});
    Tensor biased = add_bias(a, vec({10, 20, 30}));
    CHECK(biased.to_vector() == std::vector<double>{11, 22, 33, 14, 25, 36});
    CHECK_THROWS_AS((void)add_bias(a, vec({1, 2})), ShapeError);
}

TEST_CASE("shape ops move values, not meaning") {
    Tensor a = tensor_from({1, 2, 3, 4, 5, 6}, {2, 3}, DType::f64);
    CHECK(reshape(a, {3, 2}).dim(0) == 3);
    CHECK(reshape(a, {6}).to_vector() == a.to_vector());
    CHECK_THROWS_AS((void)reshape(a, {4}), ShapeError);

    CHECK(slice_rows(a, 1, 1).to_vector() == std::vector<double>{4, 5, 6});
    CHECK_THROWS_AS((void)slice_rows(a, 1, 2), IndexError);
    CHECK_THROWS_AS((void)slice_rows(a, 0, 0), ArgumentError);

    Tensor b = tensor_from({7, 8, 9}, {1, 3}, DType::f64);
    CHECK(concat_rows({a, b}).to_vector() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK_THROWS_AS((void)concat_rows({}), ArgumentError);

    CHECK(take_rows(a, {1, 0, 1}).to_vector() == std::vector<double>{4, 5, 6, 1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS((void)take_rows(a, {2}), IndexError);
}

TEST_CASE("reductions") {
    Tensor a = tensor_from({1, 2, 3, 5}, {2, 2}, DType::f64);
    CHECK(mean_rows(a).to_vector() == std::vector<double>{2, 3.5});
    CHECK(mean_all(a).scalar() == doctest::Approx(2.75));
    CHECK(sum_all(a).scalar() == doctest::Approx(11.0));
}

TEST_CASE("gelu matches the exact erf form") {
    auto ref = [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); };
    Tensor y = gelu(vec({-2.0, -0.5, 0.0, 0.5, 2.0}));
    CHECK(y.val(0) == doctest::Approx(ref(-2.0)).epsilon(1e-12));
    CHECK(y.val(2) == 0.0);
    CHECK(y.val(4) == doctest::Approx(ref(2.0)).epsilon(1e-12));
}

TEST_CASE("softmax rows are simplex points, invariant to shift") {
    Tensor x = tensor_from({1, 2, 3, 1001, 1002, 1003}, {2, 3}, DType::f64);
    Tensor p = softmax_rows(x);
    for (int64_t r = 0; r < 2; ++r) {
        double s = 0;
        for (int64_t c = 0; c < 3; ++c) s += p.val(r * 3 + c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    // both rows are the same distribution — stability under large offsets
    for (int64_t c = 0; c < 3; ++c) CHECK(p.val(c) == doctest::Approx(p.val(3 + c)).epsilon(1e-12));
}

TEST_CASE("layer_norm standardizes then applies affine") {
    Tensor x = tensor_from({1, 2, 3, 4}, {1, 4}, DType::f64);
    Tensor g = vec({1, 1, 1, 1});
    Tensor b = vec({0, 0, 0, 0});
    Tensor y = layer_norm(x, g, b);
    double mean = 0, var = 0;
    for (int64_t i = 0; i < 4; ++i) mean += y.val(i) / 4.0;
    for (int64_t i = 0; i < 4; ++i) var += y.val(i) * y.val(i) / 4.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly

    Tensor y2 = layer_norm(x, vec({2, 2, 2, 2}), vec({5, 5, 5, 5}));
    CHECK(y2.val(0) == doctest::Approx(2.0 * y.val(0) + 5.0));
}

TEST_CASE("l2 normalization and its guards") {
    Tensor v = vec({3, 4});
    Tensor u = l2_normalize(v);
    CHECK(u.val(0) == doctest::Approx(0.6));
    CHECK(u.val(1) == doctest::Approx(0.8));
    CHECK_THROWS_AS((void)l2_normalize(vec({0, 0})), DomainError);

    Tensor m = tensor_from({3, 4, 0, 5}, {2, 2}, DType::f64);
    Tensor mu = l2_normalize_rows(m);
    CHECK(mu.val(2) == doctest::Approx(0.0));
    CHECK(mu.val(3) == doctest::Approx(1.0));
}

TEST_CASE("gather_rows picks table rows and scatter-adds grads") {
    Tensor table = tensor_from({1, 2, 3, 4, 5, 6}, {3, 2}, DType::f64, true);
    Tensor got = gather_rows(table, {2, 0, 2});
    CHECK(got.to_vector() == std::vector<double>{5, 6, 1, 2, 5, 6});
    backward(sum_all(got));
    CHECK(table.grad_val(0) == doctest::Approx(1.0));
    CHECK(table.grad_val(2) == doctest::Approx(0.0));  // row 1 untouched
    CHECK(table.grad_val(4) == doctest::Approx(2.0));  // row 2 used twice
    CHECK_THROWS_AS((void)gather_rows(table, {3}), IndexError);
}

TEST_CASE("attention with a mask equals attention over the visible keys") {
    Rng rng(5);
    int64_t n = 4, d = 8, heads = 2;
    Tensor q = tensor_randn({n, d}, DType::f64, rng, 1.0);
    Tensor k = tensor_randn({n, d}, DType::f64, rng, 1.0);
    Tensor v = tensor_randn({n, d}, DType::f64, rng, 1.0);
    double att_scale = 1.0 / std::sqrt(static_cast<double>(d / heads));

    // mask out the last key for every query
    std::vector<uint8_t> mask(static_cast<size_t>(n * n), 1);
    for (int64_t i = 0; i < n; ++i) mask[static_cast<size_t>(i * n + n - 1)] = 0;
    Tensor masked = attention(q, k, v, heads, &mask, att_scale);

    Tensor k3 = slice_rows(k, 0, 3);
    Tensor v3 = slice_rows(v, 0, 3);
    Tensor truncated = attention(q, k3, v3, heads, nullptr, att_scale);
    for (int64_t i = 0; i < n * d; ++i)
        CHECK(masked.val(i) == doctest::Approx(truncated.val(i)).epsilon(1e-12));

    std::vector<uint8_t> dead(static_cast<size_t>(n * n), 0);
    CHECK_THROWS_AS((void)attention(q, k, v, heads, &dead, att_scale), DomainError);
    CHECK_THROWS_AS((void)attention(q, k, v, 3, nullptr, att_scale), ShapeError);
}

TEST_CASE("cross entropy closed forms") {
    // uniform logits over V classes -> ln V for any target
    int64_t V = 13;
    Tensor logits = tensor_full({V}, 0.42, DType::f64);
    CHECK(softmax_cross_entropy(logits, 5).scalar() ==
          doctest::Approx(std::log(static_cast<double>(V))).epsilon(1e-12));

    // two logits [1, 0], target 0 -> ln(1 + e^-1)
    CHECK(softmax_cross_entropy(vec({1.0, 0.0}), 0).scalar() ==
          doctest::Approx(0.3132616875182228).epsilon(1e-12));

    Tensor rows = tensor_from({1, 0, 0, 1}, {2, 2}, DType::f64);
    CHECK(cross_entropy_rows(rows, {0, 1}).scalar() ==
          doctest::Approx(2 * 0.3132616875182228).epsilon(1e-12));
    CHECK_THROWS_AS((void)cross_entropy_rows(rows, {0}), ShapeError);
    CHECK_THROWS_AS((void)cross_entropy_rows(rows, {0, 2}), IndexError);
}

TEST_CASE("cosine similarity and pick") {
    CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})).scalar() == doctest::Approx(0.0));
    CHECK(cosine_similarity(vec({2, 0}), vec({5, 0})).scalar() == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)cosine_similarity(vec({0, 0}), vec({1, 0})), DomainError);

    Tensor m = tensor_from({1, 2, 3, 4, 5, 6}, {2, 3}, DType::f64);
    CHECK(pick(m, 1, {2, 0}).to_vector() == std::vector<double>{6, 4});
    CHECK_THROWS_AS((void)pick(m, 2, {0}), IndexError);
}

TEST_CASE("mul_scalar_tensor broadcasts a single element") {
    Tensor x = vec({1, 2, 3});
    Tensor s = tensor_full({1}, 2.5, DType::f64);
    CHECK(mul_scalar_tensor(x, s).to_vector() == std::vector<double>{2.5, 5.0, 7.5});
    CHECK_THROWS_AS((void)mul_scalar_tensor(x, vec({1, 2})), ShapeError);
}
