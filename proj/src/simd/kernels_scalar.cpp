#include "deminf/simd/kernels.hpp"

#include <cmath>

namespace deminf::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double r = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_sq_diff_scalar(std::size_t n, double c, const double* col, double* acc) {
  for (std::size_t j = 0; j < n; ++j) {
    const double d = col[j] - c;
    acc[j] += d * d;
  }
}

void max2_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = a[j] > b[j] ? a[j] : b[j];
}

void add2_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = a[j] + b[j];
}

std::size_t count_le_scalar(std::size_t n, const double* v, double threshold) {
  std::size_t c = 0;
  for (std::size_t j = 0; j < n; ++j) c += v[j] <= threshold ? 1 : 0;
  return c;
}

void adam_scalar(std::size_t n, double* param, const double* grad, double* m, double* v,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
  const double one_minus_b1 = 1.0 - beta1;
  const double one_minus_b2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + one_minus_b1 * g;
    v[i] = beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar,        "scalar",     dot_scalar,
                                 axpy_scalar,        add_sq_diff_scalar,
                                 max2_scalar,        add2_scalar,  count_le_scalar,
                                 adam_scalar};
  return table;
}

}  // namespace deminf::simd
