#include "sdvit/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdvit::kernels {

namespace {
int g_threads = 1;

constexpr std::size_t kBlockK = 128;

// Inner kernel: rows [r0, r1) of C += A * B with B row-major [K,N].
void gemm_rows(const float* __restrict a, const float* __restrict b, float* __restrict c, std::size_t r0,
               std::size_t r1, std::size_t k, std::size_t n) {
  for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
    const std::size_t k1 = std::min(k, k0 + kBlockK);
    for (std::size_t i = r0; i < r1; ++i) {
      const float* arow = a + i * k;
      float* crow = c + i * n;
      for (std::size_t p = k0; p < k1; ++p) {
        const float av = arow[p];
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void run_rows(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  if (g_threads > 1 && m * k * n > (1u << 15)) {
    const long rows = static_cast<long>(m);
#pragma omp parallel for num_threads(g_threads) schedule(static)
    for (long i = 0; i < rows; ++i) {
      gemm_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1, k, n);
    }
    return;
  }
#endif
  gemm_rows(a, b, c, 0, m, k, n);
}

std::vector<float> transpose(const float* src, std::size_t rows, std::size_t cols) {
  std::vector<float> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}
}  // namespace

void gemm_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0f);
  run_rows(a, b, c, m, k, n);
}

void gemm_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<float> bt = transpose(b, n, k);
  gemm_nn(a, bt.data(), c, m, k, n, accumulate);
}

void gemm_tn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<float> at = transpose(a, k, m);
  gemm_nn(at.data(), b, c, m, k, n, accumulate);
}

void set_num_threads(int threads) { g_threads = std::max(1, threads); }
int num_threads() { return g_threads; }

}  // namespace sdvit::kernels
