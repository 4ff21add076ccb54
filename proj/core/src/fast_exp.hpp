#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include "msv/precision.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {
namespace detail {

// Branch-free expf that the compiler can inline and vectorize. Relative
// error stays near 2e-7 on [-87, 88]; below that the result flushes to 0.
inline float fast_exp(float x) {
  constexpr float kLog2e = 1.44269504f;
  constexpr float kLn2Hi = 0.693145752f;
  constexpr float kLn2Lo = 1.42860677e-6f;
  constexpr float kShifter = 12582912.0f;  // 1.5 * 2^23, rounds to nearest
  const bool tiny = x < -87.0f;
  x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
  const float t = x * kLog2e + kShifter;
  const float n = t - kShifter;
  const std::int32_t ni =
      std::bit_cast<std::int32_t>(t) - std::bit_cast<std::int32_t>(kShifter);
  const float r = (x - n * kLn2Hi) - n * kLn2Lo;
  float p = 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  const float scale = std::bit_cast<float>((ni + 127) << 23);
  return tiny ? 0.0f : p * scale;
}

inline double fast_exp(double x) { return std::exp(x); }

}  // namespace detail
}  // namespace MSV_PRECISION_NS
}  // namespace msv
