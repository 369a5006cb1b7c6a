// NEON lane for aarch64 (2-wide f64). Same contract as the AVX2 lane:
// per-element operation order identical to the scalar reference, no FMA.

#if defined(__aarch64__)

#include <arm_neon.h>

#include "xferlab/kernels.hpp"

namespace xferlab::kern {
namespace {

void add_(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(dst + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub_(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(dst + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void mul_(const double* a, const double* b, double* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void scale_(double c, const double* x, double* dst, std::size_t n) {
  const float64x2_t cv = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(dst + i, vmulq_f64(cv, vld1q_f64(x + i)));
  for (; i < n; ++i) dst[i] = c * x[i];
}

void axpy_(double c, const double* x, double* y, std::size_t n) {
  const float64x2_t cv = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t yv = vld1q_f64(y + i);
    yv = vaddq_f64(yv, vmulq_f64(cv, vld1q_f64(x + i)));
    vst1q_f64(y + i, yv);
  }
  for (; i < n; ++i) y[i] += c * x[i];
}

void matmul_acc_(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const float64x2_t av = vdupq_n_f64(aik);
      const double* brow = b + kk * n;
      std::size_t j = 0;
      for (; j + 2 <= n; j += 2) {
        float64x2_t cv = vld1q_f64(crow + j);
        cv = vaddq_f64(cv, vmulq_f64(av, vld1q_f64(brow + j)));
        vst1q_f64(crow + j, cv);
      }
      for (; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

const Backend* detail::neon() {
  static const Backend b{"neon", add_, sub_, mul_, scale_, axpy_, matmul_acc_};
  return &b;
}

}  // namespace xferlab::kern

#endif  // aarch64
