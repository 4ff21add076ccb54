#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "msv/precision.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

using Rng = std::mt19937_64;

/// Textual engine state; restoring it reproduces the exact draw sequence.
std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

/// Seed mixing for per-sample/per-stage streams (splitmix64 finalizer).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
