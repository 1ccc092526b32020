#include "ville/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ville {

namespace {

// Index helpers: element (i,j) of op(X) where op is optional transpose.
template <typename T>
inline T load(const T* x, int64_t ld, bool trans, int64_t i, int64_t j) {
    return trans ? x[j * ld + i] : x[i * ld + j];
}

template <typename T>
inline T dot_row(int64_t kk, const T* a, int64_t lda, bool trans_a, int64_t i,
                 const T* b, int64_t ldb, bool trans_b, int64_t j) {
    T acc = T(0);
    for (int64_t p = 0; p < kk; ++p)
        acc += load(a, lda, trans_a, i, p) * load(b, ldb, trans_b, p, j);
    return acc;
}

}  // namespace

template <typename T>
void gemm_ref(int64_t m, int64_t n, int64_t k,
              const T* a, int64_t lda, bool trans_a,
              const T* b, int64_t ldb, bool trans_b,
              T* c, int64_t ldc, T alpha, T beta) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = dot_row(k, a, lda, trans_a, i, b, ldb, trans_b, j);
            c[i * ldc + j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[i * ldc + j]);
        }
    }
}

template <typename T>
void gemm(int64_t m, int64_t n, int64_t k,
          const T* a, int64_t lda, bool trans_a,
          const T* b, int64_t ldb, bool trans_b,
          T* c, int64_t ldc, T alpha, T beta) {
#pragma omp parallel for schedule(static) if (m * n * k > 8192)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = dot_row(k, a, lda, trans_a, i, b, ldb, trans_b, j);
            c[i * ldc + j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[i * ldc + j]);
        }
    }
}

template <typename T>
void softmax_rows_inplace(T* x, int64_t rows, int64_t cols, const uint8_t* mask) {
    for (int64_t i = 0; i < rows; ++i) {
        T* row = x + i * cols;
        const uint8_t* mrow = mask ? mask + i * cols : nullptr;
        T mx = -INFINITY;
        for (int64_t j = 0; j < cols; ++j)
            if (!mrow || mrow[j]) mx = std::max(mx, row[j]);
        T sum = T(0);
        for (int64_t j = 0; j < cols; ++j) {
            if (!mrow || mrow[j]) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            } else {
                row[j] = T(0);
            }
        }
        for (int64_t j = 0; j < cols; ++j) row[j] /= sum;
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template void gemm_ref<float>(int64_t, int64_t, int64_t, const float*, int64_t, bool,
                              const float*, int64_t, bool, float*, int64_t, float, float);
template void gemm_ref<double>(int64_t, int64_t, int64_t, const double*, int64_t, bool,
                               const double*, int64_t, bool, double*, int64_t, double, double);
template void gemm<float>(int64_t, int64_t, int64_t, const float*, int64_t, bool,
                          const float*, int64_t, bool, float*, int64_t, float, float);
template void gemm<double>(int64_t, int64_t, int64_t, const double*, int64_t, bool,
                           const double*, int64_t, bool, double*, int64_t, double, double);
template void softmax_rows_inplace<float>(float*, int64_t, int64_t, const uint8_t*);
template void softmax_rows_inplace<double>(double*, int64_t, int64_t, const uint8_t*);

}  // namespace ville
