#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace xferlab::kern {

// Dense f64 inner loops behind a runtime-selected backend. Every lane must be
// bit-identical to the scalar reference: same per-element operation order and
// no FMA contraction, so training stays reproducible no matter which lane the
// dispatcher picks. The equivalence suite asserts exact equality.
struct Backend {
  const char* name;
  void (*add)(const double* a, const double* b, double* dst, std::size_t n);
  void (*sub)(const double* a, const double* b, double* dst, std::size_t n);
  void (*mul)(const double* a, const double* b, double* dst, std::size_t n);
  void (*scale)(double c, const double* x, double* dst, std::size_t n);
  // y += c * x
  void (*axpy)(double c, const double* x, double* y, std::size_t n);
  // c[m,n] += a[m,k] * b[k,n], row-major
  void (*matmul_acc)(const double* a, const double* b, double* c,
                     std::size_t m, std::size_t k, std::size_t n);
};

const Backend& scalar();
const Backend& active();

// scalar first, then whatever SIMD lanes this CPU supports
std::vector<const Backend*> available();

// Select a lane by name ("scalar", "avx2", "neon"). Returns false if the lane
// is unknown or unsupported on this CPU. The XFERLAB_KERNELS environment
// variable applies the same override at startup. Not thread-safe against
// in-flight kernel calls; switch before launching work.
bool force(const std::string& name);

// plain data movement, no per-lane variants
void transpose(const double* src, double* dst, std::size_t rows, std::size_t cols);

namespace detail {
const Backend* avx2();  // nullptr off x86 or when the CPU lacks AVX2
const Backend* neon();  // nullptr off aarch64
}  // namespace detail

}  // namespace xferlab::kern
