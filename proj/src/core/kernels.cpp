#include "mata/core/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "mata/core/error.hpp"

namespace mata::core {

#if MATA_HAVE_AVX2_TU
const KernelTable* avx2_kernels_impl();
#endif

const KernelTable* avx2_kernels() {
#if MATA_HAVE_AVX2_TU && (defined(__x86_64__) || defined(__i386__))
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return avx2_kernels_impl();
#endif
  return nullptr;
}

const KernelTable& active_kernels() {
  static const KernelTable* selected = [] {
    const char* env = std::getenv("MATA_KERNELS");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
    if (env != nullptr && std::strcmp(env, "avx2") == 0) {
      const KernelTable* t = avx2_kernels();
      if (t == nullptr)
        throw ContractError("MATA_KERNELS=avx2 requested but AVX2+FMA is unavailable");
      return t;
    }
    const KernelTable* t = avx2_kernels();
    return t != nullptr ? t : &scalar_kernels();
  }();
  return *selected;
}

}  // namespace mata::core
