#include <atomic>
#include <cstdlib>
#include <string>

#include "spantag/kernels.hpp"

namespace spantag::kernels {

#ifdef SPANTAG_HAVE_AVX2
namespace detail {
const KernelTable& avx2_table();
}
#endif

const KernelTable* avx2_kernels() {
#ifdef SPANTAG_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &detail::avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* lookup(std::string_view name) {
  if (name == "scalar") return &scalar_kernels();
  if (name == "avx2") return avx2_kernels();
  return nullptr;
}

const KernelTable* initial() {
  if (const char* env = std::getenv("SPANTAG_SIMD")) {
    if (const KernelTable* t = lookup(env)) return t;
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  const KernelTable* t = lookup(name);
  if (!t) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

std::vector<std::string_view> available() {
  std::vector<std::string_view> names{"scalar"};
  if (avx2_kernels()) names.push_back("avx2");
  return names;
}

}  // namespace spantag::kernels
