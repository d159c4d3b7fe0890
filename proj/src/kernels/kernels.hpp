#pragma once

#include <string>

namespace pd::kern {

// Data-parallel inner loops behind everything numeric in this project.
// Each kernel has a scalar reference implementation and an AVX2+FMA variant;
// the active set is picked once at startup from CPUID and can be overridden
// with the PROMPTDISTILL_KERNELS environment variable ("scalar" or "avx2")
// or force_backend(), which the equivalence tests use.
//
// Parameters are stored as float32 and widened on the fly; activations and
// gradients are double. The *_wf32 kernels take the float32 operand on the
// B side.

enum class Backend { scalar, avx2 };

Backend active_backend();
void force_backend(Backend b);
bool avx2_available();
std::string backend_name(Backend b);

struct KernelTable {
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, int n);
  double (*dot_wf32)(const double* a, const float* b, int n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, int n);
  // C[m x n] = A[m x k] * B[n x k]^T   (rows of B are the dot-product side)
  void (*gemm_nt)(const double* A, const double* B, double* C, int m, int n, int k);
  void (*gemm_nt_wf32)(const double* A, const float* B, double* C, int m, int n, int k);
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(const double* A, const double* B, double* C, int m, int n, int k,
                  bool accumulate);
  void (*gemm_nn_wf32)(const double* A, const float* B, double* C, int m, int n,
                       int k, bool accumulate);
};

const KernelTable& kernels();

// Reference implementations, exported for equivalence testing.
namespace scalar {
double dot(const double* a, const double* b, int n);
double dot_wf32(const double* a, const float* b, int n);
void axpy(double alpha, const double* x, double* y, int n);
void gemm_nt(const double* A, const double* B, double* C, int m, int n, int k);
void gemm_nt_wf32(const double* A, const float* B, double* C, int m, int n, int k);
void gemm_nn(const double* A, const double* B, double* C, int m, int n, int k,
             bool accumulate);
void gemm_nn_wf32(const double* A, const float* B, double* C, int m, int n, int k,
                  bool accumulate);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define PD_HAVE_AVX2_TU 1
namespace avx2 {
double dot(const double* a, const double* b, int n);
double dot_wf32(const double* a, const float* b, int n);
void axpy(double alpha, const double* x, double* y, int n);
void gemm_nt(const double* A, const double* B, double* C, int m, int n, int k);
void gemm_nt_wf32(const double* A, const float* B, double* C, int m, int n, int k);
void gemm_nn(const double* A, const double* B, double* C, int m, int n, int k,
             bool accumulate);
void gemm_nn_wf32(const double* A, const float* B, double* C, int m, int n, int k,
                  bool accumulate);
}  // namespace avx2
#endif

}  // namespace pd::kern
