// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace locatt::kernels {

// Vectorizable inner loops on contiguous f64 buffers. Two implementations
// exist, scalar and AVX2, selected once at startup. Lane-wise ops (add
// through relu, and axpy) must produce bit-identical results across
// implementations: each output lane is one IEEE operation, no fusing.
// Reductions (dot, sum) may reassociate and dot may fuse, so callers
// get equal results only up to rounding. max is bit-exact.
struct Ops {
  const char* name;

  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double c, double* out, std::size_t n);
  // out[i] += c * a[i], computed as mul then add (never fused).
  void (*axpy)(const double* a, double c, double* out, std::size_t n);
  void (*relu)(const double* a, double* out, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*max)(const double* a, std::size_t n);
};

// Always available reference implementation.
const Ops& scalar();

// AVX2 implementation, or nullptr when not compiled in or the CPU
// lacks the feature.
const Ops* avx2();

// Implementation chosen at first use: the LOCATT_KERNELS environment
// variable ("scalar", "avx2", "auto") when set, otherwise the widest
// supported. Requesting "avx2" on an unsupported CPU throws.
const Ops& active();

// Force a specific implementation for this process. Same names as the
// environment variable. Throws config_error on an unknown name or an
// unsupported request.
void select(std::string_view name);

}  // namespace locatt::kernels
