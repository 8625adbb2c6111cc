#include "deminf/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace deminf::simd {

#ifndef DEMINF_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(DEMINF_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable* lookup(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &scalar_kernels();
    case Isa::Avx2:
      return cpu_supports(Isa::Avx2) ? avx2_kernels() : nullptr;
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("DEMINF_SIMD"); env != nullptr && *env != '\0') {
    const KernelTable* t = lookup(parse_isa(env));
    if (t == nullptr) throw std::runtime_error(std::string("DEMINF_SIMD=") + env + " unavailable");
    return t;
  }
  if (const KernelTable* t = lookup(Isa::Avx2)) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) {
  const KernelTable* t = lookup(isa);
  if (t == nullptr) throw std::runtime_error("kernel variant not available on this machine");
  slot().store(t, std::memory_order_relaxed);
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const KernelTable* t = lookup(Isa::Avx2)) out.push_back(t);
  return out;
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  throw std::invalid_argument("unknown kernel variant '" + std::string(name) + "'");
}

}  // namespace deminf::simd
