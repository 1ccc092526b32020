#pragma once

#include <cstdint>

namespace ville {

// Dense kernels. `gemm` parallelizes over output rows with OpenMP; `gemm_ref`
// is the serial reference kept for testing and benchmarking. Both compute
// every output element with the same sequential dot-product order, so results
// are bit-identical to each other and across thread counts.
//
// C[M,N] = alpha * op(A)[M,K] @ op(B)[K,N] + beta * C
// lda/ldb/ldc are row strides of the *stored* (untransposed) matrices.

template <typename T>
void gemm_ref(int64_t m, int64_t n, int64_t k,
              const T* a, int64_t lda, bool trans_a,
              const T* b, int64_t ldb, bool trans_b,
              T* c, int64_t ldc, T alpha, T beta);

template <typename T>
void gemm(int64_t m, int64_t n, int64_t k,
          const T* a, int64_t lda, bool trans_a,
          const T* b, int64_t ldb, bool trans_b,
          T* c, int64_t ldc, T alpha, T beta);

// In-place row-wise softmax over a [rows, cols] buffer, with optional
// 0/1 mask (disallowed entries get probability 0; a fully masked row is a
// caller bug and traps in the op layer before reaching here).
template <typename T>
void softmax_rows_inplace(T* x, int64_t rows, int64_t cols, const uint8_t* mask);

int max_threads();

}  // namespace ville
