#pragma once

// Scalar type selection. Translation units built with MSV_USE_F64 see the
// double-precision library in msv::f64; everything else sees msv::f32.
// Both can be linked into one binary.

#ifdef MSV_USE_F64
#define MSV_PRECISION_NS f64
#else
#define MSV_PRECISION_NS f32
#endif

namespace msv {
inline namespace MSV_PRECISION_NS {

#ifdef MSV_USE_F64
using real = double;
inline constexpr const char* kPrecisionName = "f64";
#else
using real = float;
inline constexpr const char* kPrecisionName = "f32";
#endif

}  // namespace MSV_PRECISION_NS
}  // namespace msv
