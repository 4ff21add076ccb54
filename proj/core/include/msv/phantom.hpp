#pragma once

#include <cstdint>

#include "msv/pgm.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// Synthetic echo-like frame: a dark cavity ellipse inside a bright
/// myocardium ring on a mid-gray background, with multiplicative speckle.
struct PhantomSpec {
  std::size_t height = 112;
  std::size_t width = 112;
  double cx = 56, cy = 56;   // ellipse centre, pixel units
  double a = 20, b = 14;     // semi-axes along the rotated x / y axes
  double theta = 0;          // rotation, radians
  double ring = 4;           // ring thickness in pixels
  double speckle = 0.3;      // sigma of the multiplicative noise
  double blur_radius = 1.5;  // Gaussian sigma for the intensity map and the noise
  double background = 90;
  double cavity = 30;
  double wall = 190;
  std::size_t classes = 3;   // 2: {background, cavity}; 3: adds the ring
  std::uint64_t seed = 0;

  /// Throws ConfigError when the ring leaves the canvas or a, b < 3.
  void validate() const;
};

struct Phantom {
  GrayImage image;
  GrayImage mask;  // class indices
};

Phantom generate_phantom(const PhantomSpec& spec);

/// Randomized geometry drawn from `seed`, centred near the canvas middle.
PhantomSpec random_phantom_spec(std::uint64_t seed, std::size_t classes,
                                std::size_t height = 112,
                                std::size_t width = 112);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
