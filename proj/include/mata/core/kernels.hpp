#pragma once

#include <cstddef>

namespace mata::core {

// Data-parallel inner loops behind every tensor op. Two implementations exist:
// a scalar reference and an AVX2+FMA variant; `active_kernels()` picks one at
// runtime (cpuid, overridable via MATA_KERNELS=scalar|avx2). The gemm kernels
// accumulate into C; callers zero C when they want a plain product.
struct KernelTable {
  const char* name;

  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] += A[m x k] * B^T, B stored [n x k]
  void (*gemm_nt)(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] += A^T * B, A stored [k x m], B stored [k x n]
  void (*gemm_tn)(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n);

  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*sub)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  void (*scale)(const double* x, double a, double* out, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out += x * y (elementwise), gradient accumulation form
  void (*mul_acc)(const double* x, const double* y, double* out, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  void (*relu)(const double* x, double* out, std::size_t n);
  void (*leaky_relu)(const double* x, double slope, double* out, std::size_t n);
  // gx += gy where x > 0
  void (*relu_grad_acc)(const double* x, const double* gy, double* gx, std::size_t n);
  // gx += gy * (x > 0 ? 1 : slope)
  void (*leaky_relu_grad_acc)(const double* x, double slope, const double* gy,
                              double* gx, std::size_t n);
};

const KernelTable& scalar_kernels();

// Null when the binary lacks the AVX2 TU or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// Resolved once per process: MATA_KERNELS env override, else best supported.
const KernelTable& active_kernels();

}  // namespace mata::core
