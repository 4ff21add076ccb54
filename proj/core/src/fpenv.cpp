#include "msv/fpenv.hpp"

#if defined(__SSE2__) || defined(_M_X64)
#include <xmmintrin.h>
#define MSV_HAVE_MXCSR 1
#endif

namespace msv {

namespace {
constexpr unsigned kFlushToZero = 0x8000;
constexpr unsigned kDenormalsAreZero = 0x0040;
}  // namespace

FlushDenormalsGuard::FlushDenormalsGuard() {
#ifdef MSV_HAVE_MXCSR
  saved_ = _mm_getcsr();
  _mm_setcsr(saved_ | kFlushToZero | kDenormalsAreZero);
#endif
}

FlushDenormalsGuard::~FlushDenormalsGuard() {
#ifdef MSV_HAVE_MXCSR
  _mm_setcsr(saved_);
#endif
}

}  // namespace msv
