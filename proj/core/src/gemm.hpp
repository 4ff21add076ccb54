#pragma once

#include <cstddef>

#include "msv/precision.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {
namespace detail {

// Row-major C = alpha * op(A) * op(B) + beta * C, op(A) is M x K, op(B) K x N.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, real alpha, const real* a, std::size_t lda,
          const real* b, std::size_t ldb, real beta, real* c, std::size_t ldc);

}  // namespace detail
}  // namespace MSV_PRECISION_NS
}  // namespace msv
