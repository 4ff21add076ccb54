#include "gemm.hpp"

#include <cblas.h>

#include <mutex>

namespace msv {
inline namespace MSV_PRECISION_NS {
namespace detail {

namespace {
void pin_single_thread() {
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}
}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, real alpha, const real* a, std::size_t lda,
          const real* b, std::size_t ldb, real beta, real* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  pin_single_thread();
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  const auto M = static_cast<blasint>(m);
  const auto N = static_cast<blasint>(n);
  const auto K = static_cast<blasint>(k);
#ifdef MSV_USE_F64
  cblas_dgemm(CblasRowMajor, ta, tb, M, N, K, alpha, a,
              static_cast<blasint>(lda), b, static_cast<blasint>(ldb), beta, c,
              static_cast<blasint>(ldc));
#else
  cblas_sgemm(CblasRowMajor, ta, tb, M, N, K, alpha, a,
              static_cast<blasint>(lda), b, static_cast<blasint>(ldb), beta, c,
              static_cast<blasint>(ldc));
#endif
}

}  // namespace detail
}  // namespace MSV_PRECISION_NS
}  // namespace msv
