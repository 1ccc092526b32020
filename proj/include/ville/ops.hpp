#pragma once

#include <vector>

#include "ville/tensor.hpp"

namespace ville {

// Differentiable op library. Every op validates shapes/dtypes up front,
// computes eagerly, and (when grad mode is on and an input requires grad)
// attaches a backward closure. Hot paths that would otherwise explode into
// many small nodes are fused: attention, layer_norm, cross-entropy,
// normalization.

// elementwise / scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor exp_t(const Tensor& a);
// x * s where s is a single-element tensor (learnable temperature paths).
Tensor mul_scalar_tensor(const Tensor& x, const Tensor& s);

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor transpose(const Tensor& a);
Tensor add_bias(const Tensor& x, const Tensor& b);

// shape
Tensor reshape(const Tensor& x, std::vector<int64_t> new_shape);
Tensor slice_rows(const Tensor& x, int64_t begin, int64_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
// Copy selected rows (duplicates allowed); grads scatter-add back.
Tensor take_rows(const Tensor& x, const std::vector<int64_t>& rows);

// reductions
Tensor mean_rows(const Tensor& x);  // [m,d] -> [d]
Tensor mean_all(const Tensor& x);   // -> [1]
Tensor sum_all(const Tensor& x);    // -> [1]

// nonlinearities / norms
Tensor gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor l2_normalize(const Tensor& x);       // 1-D
Tensor l2_normalize_rows(const Tensor& x);  // 2-D, per row

// embedding lookup: rows of table at ids; backward scatter-adds.
Tensor gather_rows(const Tensor& table, const std::vector<int64_t>& ids);

// fused multi-head attention over already-projected q/k/v of width
// n_heads*head_dim. mask is row-major [nq*nk], nonzero = attend; null = full.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t n_heads,
                 const std::vector<uint8_t>* mask, double att_scale);

// similarities / losses
Tensor cosine_similarity(const Tensor& a, const Tensor& b);  // 1-D x 1-D -> [1]
Tensor softmax_cross_entropy(const Tensor& logits, int64_t target);  // 1-D -> [1]
// Sum of per-row CE; callers divide for a mean. logits [m,V], targets size m.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int64_t>& targets);
// Copy x[row, cols[j]] into a [k] vector.
Tensor pick(const Tensor& x, int64_t row, const std::vector<int64_t>& cols);

}  // namespace ville
