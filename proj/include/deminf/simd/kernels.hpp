#pragma once

// Inner-loop kernels with one scalar reference implementation and optional
// SIMD variants. Every variant reproduces the reference's floating-point
// operation order exactly, so results are bitwise identical across variants.

#include <cstddef>
#include <string_view>
#include <vector>

namespace deminf::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  const char* name;

  // Sum of a[i]*b[i]. Reduction order: four interleaved partial sums over the
  // largest multiple-of-4 prefix, combined as (s0+s1)+(s2+s3), then the tail
  // added left to right.
  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[i] += alpha * x[i]
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);

  // acc[j] += (col[j] - c)^2
  void (*add_sq_diff)(std::size_t n, double c, const double* col, double* acc);

  // out[j] = a[j] > b[j] ? a[j] : b[j]
  void (*max2)(std::size_t n, const double* a, const double* b, double* out);

  // out[j] = a[j] + b[j]
  void (*add2)(std::size_t n, const double* a, const double* b, double* out);

  // #{j : v[j] <= threshold}
  std::size_t (*count_le)(std::size_t n, const double* v, double threshold);

  // Bias-corrected Adam. bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
  void (*adam)(std::size_t n, double* param, const double* grad, double* m, double* v,
               double lr, double beta1, double beta2, double eps, double bc1, double bc2);
};

const KernelTable& scalar_kernels();

/// Nullptr when the variant was not compiled in.
const KernelTable* avx2_kernels();

/// Whether the running CPU can execute `isa`.
bool cpu_supports(Isa isa);

/// The table used by the library. Chosen on first use: the best supported
/// variant, unless DEMINF_SIMD=scalar is set in the environment.
const KernelTable& active();

/// Override the active table. Throws if the variant is unavailable.
void set_active(Isa isa);

/// Every variant that is compiled in and runnable on this CPU.
std::vector<const KernelTable*> available();

Isa parse_isa(std::string_view name);

}  // namespace deminf::simd
