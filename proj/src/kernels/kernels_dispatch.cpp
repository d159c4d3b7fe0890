#include "kernels/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace pd::kern {

namespace {

KernelTable make_table(Backend b) {
  KernelTable t;
#ifdef PD_HAVE_AVX2_TU
  if (b == Backend::avx2) {
    t.dot = avx2::dot;
    t.dot_wf32 = avx2::dot_wf32;
    t.axpy = avx2::axpy;
    t.gemm_nt = avx2::gemm_nt;
    t.gemm_nt_wf32 = avx2::gemm_nt_wf32;
    t.gemm_nn = avx2::gemm_nn;
    t.gemm_nn_wf32 = avx2::gemm_nn_wf32;
    return t;
  }
#else
  (void)b;
#endif
  t.dot = scalar::dot;
  t.dot_wf32 = scalar::dot_wf32;
  t.axpy = scalar::axpy;
  t.gemm_nt = scalar::gemm_nt;
  t.gemm_nt_wf32 = scalar::gemm_nt_wf32;
  t.gemm_nn = scalar::gemm_nn;
  t.gemm_nn_wf32 = scalar::gemm_nn_wf32;
  return t;
}

Backend detect_backend() {
#ifdef PD_HAVE_AVX2_TU
  if (const char* env = std::getenv("PROMPTDISTILL_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Backend::avx2;
  }
  if (avx2_available()) return Backend::avx2;
#endif
  return Backend::scalar;
}

Backend g_backend = detect_backend();
KernelTable g_table = make_table(g_backend);

}  // namespace

bool avx2_available() {
#ifdef PD_HAVE_AVX2_TU
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return g_backend; }

void force_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_available()) b = Backend::scalar;
  g_backend = b;
  g_table = make_table(b);
}

std::string backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

const KernelTable& kernels() { return g_table; }

}  // namespace pd::kern
