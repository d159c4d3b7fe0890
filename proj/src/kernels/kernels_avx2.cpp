// AVX2+FMA variants of the reference kernels. This translation unit is the
// only one compiled with -mavx2 -mfma; it is reached only after the runtime
// CPUID check in kernels_dispatch.cpp.
//
// Accumulation order differs from the scalar reference (4-wide lanes reduced
// at the end), so results agree within rounding, not bitwise. The equivalence
// tests pin the tolerance.

#include "kernels/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

namespace pd::kern::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

// Load 4 floats and widen to 4 doubles.
inline __m256d load_wf32(const float* p) {
  return _mm256_cvtps_pd(_mm_loadu_ps(p));
}

}  // namespace

double dot(const double* a, const double* b, int n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_wf32(const double* a, const float* b, int n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), load_wf32(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), load_wf32(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), load_wf32(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * static_cast<double>(b[i]);
  return acc;
}

void axpy(double alpha, const double* x, double* y, int n) {
  const __m256d va = _mm256_set1_pd(alpha);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// 1x4 micro-kernel: one row of A against four rows of B, two k-wide
// accumulators per B row to keep eight FMAs in flight.
void gemm_nt(const double* A, const double* B, double* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = B + static_cast<size_t>(j) * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      __m256d t0 = _mm256_setzero_pd(), t1 = _mm256_setzero_pd();
      __m256d t2 = _mm256_setzero_pd(), t3 = _mm256_setzero_pd();
      int p = 0;
      for (; p + 8 <= k; p += 8) {
        const __m256d av0 = _mm256_loadu_pd(a + p);
        const __m256d av1 = _mm256_loadu_pd(a + p + 4);
        s0 = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b3 + p), s3);
        t0 = _mm256_fmadd_pd(av1, _mm256_loadu_pd(b0 + p + 4), t0);
        t1 = _mm256_fmadd_pd(av1, _mm256_loadu_pd(b1 + p + 4), t1);
        t2 = _mm256_fmadd_pd(av1, _mm256_loadu_pd(b2 + p + 4), t2);
        t3 = _mm256_fmadd_pd(av1, _mm256_loadu_pd(b3 + p + 4), t3);
      }
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(a + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(_mm256_add_pd(s0, t0));
      double r1 = hsum(_mm256_add_pd(s1, t1));
      double r2 = hsum(_mm256_add_pd(s2, t2));
      double r3 = hsum(_mm256_add_pd(s3, t3));
      for (; p < k; ++p) {
        const double av = a[p];
        r0 += av * b0[p];
        r1 += av * b1[p];
        r2 += av * b2[p];
        r3 += av * b3[p];
      }
      c[j] = r0;
      c[j + 1] = r1;
      c[j + 2] = r2;
      c[j + 3] = r3;
    }
    for (; j < n; ++j) {
      c[j] = dot(a, B + static_cast<size_t>(j) * k, k);
    }
  }
}

void gemm_nt_wf32(const double* A, const float* B, double* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* b0 = B + static_cast<size_t>(j) * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      int p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(a + p);
        s0 = _mm256_fmadd_pd(av, load_wf32(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, load_wf32(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, load_wf32(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, load_wf32(b3 + p), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; p < k; ++p) {
        const double av = a[p];
        r0 += av * static_cast<double>(b0[p]);
        r1 += av * static_cast<double>(b1[p]);
        r2 += av * static_cast<double>(b2[p]);
        r3 += av * static_cast<double>(b3[p]);
      }
      c[j] = r0;
      c[j + 1] = r1;
      c[j + 2] = r2;
      c[j + 3] = r3;
    }
    for (; j < n; ++j) {
      c[j] = dot_wf32(a, B + static_cast<size_t>(j) * k, k);
    }
  }
}

void gemm_nn(const double* A, const double* B, double* C, int m, int n, int k,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* c = C + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(c, 0, sizeof(double) * n);
    const double* a = A + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const __m256d av = _mm256_set1_pd(a[p]);
      const double* b = B + static_cast<size_t>(p) * n;
      int j = 0;
      for (; j + 8 <= n; j += 8) {
        _mm256_storeu_pd(c + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j),
                                                _mm256_loadu_pd(c + j)));
        _mm256_storeu_pd(c + j + 4, _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j + 4),
                                                    _mm256_loadu_pd(c + j + 4)));
      }
      for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(c + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j),
                                                _mm256_loadu_pd(c + j)));
      }
      const double as = a[p];
      for (; j < n; ++j) c[j] += as * b[j];
    }
  }
}

void gemm_nn_wf32(const double* A, const float* B, double* C, int m, int n, int k,
                  bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* c = C + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(c, 0, sizeof(double) * n);
    const double* a = A + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const __m256d av = _mm256_set1_pd(a[p]);
      const float* b = B + static_cast<size_t>(p) * n;
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(c + j, _mm256_fmadd_pd(av, load_wf32(b + j),
                                                _mm256_loadu_pd(c + j)));
      }
      const double as = a[p];
      for (; j < n; ++j) c[j] += as * static_cast<double>(b[j]);
    }
  }
}

}  // namespace pd::kern::avx2

#endif  // x86_64
