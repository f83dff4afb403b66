#include "depthfit/kernels.hpp"

#include <cmath>

namespace dfit::kernels {

namespace {

void mul_scalar(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void abs_diff_scalar(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = std::abs(a[i] - b[i]);
}

void axpy_scalar(double* dst, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += alpha * x[i];
}

double sum_scalar(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

void add_scalar(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void scale_scalar(double* dst, const double* a, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * s;
}

const Ops kScalarOps{mul_scalar, abs_diff_scalar, axpy_scalar,
                     sum_scalar, add_scalar, scale_scalar};

} // namespace

const Ops& scalar() { return kScalarOps; }

#ifdef DEPTHFIT_WITH_AVX2
namespace detail {
const Ops& avx2_ops();
}

const Ops& active() {
  static const Ops& ops = __builtin_cpu_supports("avx2") ? detail::avx2_ops() : kScalarOps;
  return ops;
}

std::string_view active_name() {
  return &active() == &kScalarOps ? "scalar" : "avx2";
}
#else
const Ops& active() { return kScalarOps; }
std::string_view active_name() { return "scalar"; }
#endif

} // namespace dfit::kernels
