#pragma once

namespace ldst {

// Row-major C = alpha * op(A) * op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

// Limit the BLAS backend to one thread; called once by long-running drivers.
void set_blas_threads(int threads);

}  // namespace ldst
