// AVX2+FMA kernel variants. This TU is compiled with -mavx2 -mfma and must
// only be entered after a runtime cpuid check (see kernels.cpp).
#include <immintrin.h>

#include "mata/core/kernels.hpp"

namespace mata::core {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d av = _mm256_set1_pd(ai[p]);
      const double* bp = b + p * n;
      std::size_t j = 0;
      for (; j < n4; j += 4) {
        __m256d cj = _mm256_loadu_pd(ci + j);
        cj = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), cj);
        _mm256_storeu_pd(ci + j, cj);
      }
      const double avs = ai[p];
      for (; j < n; ++j) ci[j] += avs * bp[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t k4 = k & ~std::size_t{3};
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      __m256d acc = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p < k4; p += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(ai + p), _mm256_loadu_pd(bj + p), acc);
      double s = hsum(acc);
      for (; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const __m256d av = _mm256_set1_pd(ap[i]);
      double* ci = c + i * n;
      std::size_t j = 0;
      for (; j < n4; j += 4) {
        __m256d cj = _mm256_loadu_pd(ci + j);
        cj = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), cj);
        _mm256_storeu_pd(ci + j, cj);
      }
      const double avs = ap[i];
      for (; j < n; ++j) ci[j] += avs * bp[j];
    }
  }
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] - y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(const double* x, double a, double* out, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    __m256d yi = _mm256_loadu_pd(y + i);
    yi = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yi);
    _mm256_storeu_pd(y + i, yi);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void mul_acc(const double* x, const double* y, double* out, std::size_t n) {
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    __m256d o = _mm256_loadu_pd(out + i);
    o = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), o);
    _mm256_storeu_pd(out + i, o);
  }
  for (; i < n; ++i) out[i] += x[i] * y[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

void relu(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void leaky_relu(const double* x, double slope, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d sl = _mm256_set1_pd(slope);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const __m256d xi = _mm256_loadu_pd(x + i);
    const __m256d neg = _mm256_mul_pd(sl, xi);
    const __m256d mask = _mm256_cmp_pd(xi, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(neg, xi, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void relu_grad_acc(const double* x, const double* gy, double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) gx[i] += gy[i];
}

void leaky_relu_grad_acc(const double* x, double slope, const double* gy,
                         double* gx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sl = _mm256_set1_pd(slope);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d f = _mm256_blendv_pd(sl, one, mask);
    __m256d g = _mm256_loadu_pd(gx + i);
    g = _mm256_fmadd_pd(f, _mm256_loadu_pd(gy + i), g);
    _mm256_storeu_pd(gx + i, g);
  }
  for (; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.0 ? 1.0 : slope);
}

}  // namespace

const KernelTable* avx2_kernels_impl() {
  static const KernelTable table{
      "avx2",   gemm_nn,  gemm_nt, gemm_tn, add,  sub,
      mul,      scale,    axpy,    mul_acc, dot,  sum,
      relu,     leaky_relu, relu_grad_acc,  leaky_relu_grad_acc,
  };
  return &table;
}

}  // namespace mata::core
