// SPDX-License-Identifier: Apache-2.0
#include "locatt/kernels.hpp"

#include <algorithm>

// Reference kernels. This translation unit is compiled with
// -ffp-contract=off so the compiler cannot fuse the mul and add in
// axpy; bit-exact agreement with the AVX2 lane-wise ops depends on
// both sides performing the same two roundings.

namespace locatt::kernels {
namespace {

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void axpy_scalar(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = out[i] + a[i] * c;
}

void relu_scalar(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double max_scalar(const double* a, std::size_t n) {
  double m = a[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

}  // namespace

const Ops& scalar() {
  static const Ops ops = {
      "scalar",     add_scalar,  sub_scalar, mul_scalar, scale_scalar,
      axpy_scalar,  relu_scalar, dot_scalar, sum_scalar, max_scalar,
  };
  return ops;
}

}  // namespace locatt::kernels
