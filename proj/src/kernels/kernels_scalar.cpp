#include "kernels/kernels.hpp"

#include <cstring>

namespace pd::kern::scalar {

double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_wf32(const double* a, const float* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * static_cast<double>(b[i]);
  return acc;
}

void axpy(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt(const double* A, const double* B, double* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      c[j] = dot(a, B + static_cast<size_t>(j) * k, k);
    }
  }
}

void gemm_nt_wf32(const double* A, const float* B, double* C, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<size_t>(i) * k;
    double* c = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
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
      const double av = a[p];
      const double* b = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
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
      const double av = a[p];
      const float* b = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * static_cast<double>(b[j]);
    }
  }
}

}  // namespace pd::kern::scalar
