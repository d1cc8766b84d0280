#pragma once

#include <cstddef>

namespace sdvit::kernels {

// Row-parallel GEMM variants. Every output element is reduced by a single
// thread in a fixed k order, so results do not depend on the thread count.

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

void set_num_threads(int threads);
int num_threads();

}  // namespace sdvit::kernels
