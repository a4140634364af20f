// SPDX-License-Identifier: Apache-2.0
#include "locatt/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>

// AVX2 kernels, four f64 lanes per iteration plus a scalar tail. The
// tail loops repeat the scalar kernel expressions exactly, and the TU
// is compiled with -ffp-contract=off, so lane-wise ops stay bit-exact
// against the scalar implementation. Only dot uses FMA, and only
// reductions reassociate.

namespace locatt::kernels {
namespace {

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double c, double* out, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
  for (; i < n; ++i) out[i] = a[i] * c;
}

void axpy_avx2(const double* a, double c, double* out, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  // mul then add, not fmadd: keeps both roundings of the scalar kernel.
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), vc);
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), prod));
  }
  for (; i < n; ++i) out[i] = out[i] + a[i] * c;
}

void relu_avx2(const double* a, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

double max_avx2(const double* a, std::size_t n) {
  // max is exact under any evaluation order, so lanes are free.
  double m = a[0];
  std::size_t i = 1;
  if (n >= 5) {
    __m256d acc = _mm256_loadu_pd(a + 1);
    for (i = 5; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
    __m128d lo = _mm_max_pd(_mm256_castpd256_pd128(acc), _mm256_extractf128_pd(acc, 1));
    m = std::max(m, _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo))));
  }
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

}  // namespace

const Ops* avx2() {
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  static const Ops ops = {
      "avx2",     add_avx2,  sub_avx2, mul_avx2, scale_avx2,
      axpy_avx2,  relu_avx2, dot_avx2, sum_avx2, max_avx2,
  };
  return &ops;
}

}  // namespace locatt::kernels

#else

namespace locatt::kernels {

const Ops* avx2() { return nullptr; }

}  // namespace locatt::kernels

#endif
