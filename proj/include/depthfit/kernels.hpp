#pragma once

#include <cstddef>
#include <string_view>

// Elementwise array kernels behind the per-pixel loss and filtering loops.
// Scalar reference implementations always exist; on x86 with AVX2 the
// dispatcher swaps in vectorized variants at startup. Both variants are
// equivalence-tested against each other. Reduction order within one variant
// is fixed, so repeated runs on the same machine are bit-identical.

namespace dfit::kernels {

struct Ops {
  // dst[i] = a[i] * b[i]
  void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
  // dst[i] = |a[i] - b[i]|
  void (*abs_diff)(double* dst, const double* a, const double* b, std::size_t n);
  // dst[i] += alpha * x[i]
  void (*axpy)(double* dst, double alpha, const double* x, std::size_t n);
  // sum of a[0..n)
  double (*sum)(const double* a, std::size_t n);
  // dst[i] = a[i] + b[i]
  void (*add)(double* dst, const double* a, const double* b, std::size_t n);
  // dst[i] = a[i] * s
  void (*scale)(double* dst, const double* a, double s, std::size_t n);
};

// Active variant, selected once at first use.
const Ops& active();
// Scalar reference, always available (used by equivalence tests).
const Ops& scalar();
// Name of the active variant: "scalar" or "avx2".
std::string_view active_name();

} // namespace dfit::kernels
