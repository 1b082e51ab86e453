#pragma once

#include <cstddef>

namespace ar2 {

// Small row-major GEMM kernels used by the convolution lowering. Loops are
// ordered so the inner dimension is contiguous and auto-vectorizes; every
// output element is accumulated in a fixed order, which keeps results
// bit-identical across runs.

// C[M x N] (+)= A[M x K] * B[K x N]
template <typename T>
void gemm_nn(size_t m, size_t n, size_t k, const T* a, size_t lda, const T* b,
             size_t ldb, T* c, size_t ldc, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        T* __restrict crow = c + i * ldc;
        if (!accumulate) {
            for (size_t j = 0; j < n; ++j) crow[j] = T(0);
        }
        const T* arow = a + i * lda;
        const size_t k4 = k & ~size_t(3);
        size_t p = 0;
        // Four-way unroll over k amortizes the crow load/store traffic.
        for (; p < k4; p += 4) {
            const T a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
            const T* __restrict b0 = b + p * ldb;
            const T* __restrict b1 = b0 + ldb;
            const T* __restrict b2 = b1 + ldb;
            const T* __restrict b3 = b2 + ldb;
            for (size_t j = 0; j < n; ++j)
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; p < k; ++p) {
            const T ap = arow[p];
            const T* __restrict brow = b + p * ldb;
            for (size_t j = 0; j < n; ++j) crow[j] += ap * brow[j];
        }
    }
}

// C[M x N] (+)= A[M x K] * B[N x K]^T   (rows of B dotted with rows of A)
template <typename T>
void gemm_nt(size_t m, size_t n, size_t k, const T* a, size_t lda, const T* b,
             size_t ldb, T* c, size_t ldc, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const T* __restrict arow = a + i * lda;
        T* crow = c + i * ldc;
        for (size_t j = 0; j < n; ++j) {
            const T* __restrict brow = b + j * ldb;
            T acc = T(0);
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

// B[N x M] = A[M x N]^T
template <typename T>
void transpose(size_t m, size_t n, const T* a, size_t lda, T* b, size_t ldb) {
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) b[j * ldb + i] = a[i * lda + j];
}

}  // namespace ar2
