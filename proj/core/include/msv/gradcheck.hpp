#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "msv/tensor.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

#ifdef MSV_USE_F64
inline constexpr real kDefaultFdStep = real(1e-6);
inline constexpr double kDefaultGradTolerance = 1e-5;
#else
inline constexpr real kDefaultFdStep = real(1e-2);
inline constexpr double kDefaultGradTolerance = 1e-3;
#endif

struct GradcheckOptions {
  real step = kDefaultFdStep;
  double tolerance = kDefaultGradTolerance;
  /// Larger tensors are checked on a seeded random subset of coordinates.
  std::size_t max_coords_per_tensor = 48;
  std::uint64_t seed = 0;
  /// One-sided slopes are taken at +-step and +-step/2. A coordinate
  /// straddles a kink (relu, max) and is left out of the error when both
  /// the slope range and |2 gap(step/2) - gap(step)| (gap = right slope -
  /// left slope, zero up to O(step^2) for smooth functions) exceed this
  /// fraction of (|central difference| + rms over all coordinates).
  double nonsmooth_threshold = 0.01;
  /// The check fails outright when more coordinates than this are left out.
  double max_nonsmooth_fraction = 0.2;
};

struct TensorGradCheck {
  std::string name;
  double rel_error = 0;
  std::size_t coords = 0;
  std::size_t nonsmooth = 0;  // coordinates left out, see GradcheckOptions
};

struct GradcheckReport {
  std::vector<TensorGradCheck> tensors;
  /// Error of the whole gradient vector: every checked coordinate of every
  /// tensor in one norm. This is what passed() compares.
  double rel_error = 0;
  std::size_t coords = 0;
  std::size_t nonsmooth = 0;
  double max_nonsmooth_fraction = 0.2;

  /// Worst single-tensor error. Small tensors with near-zero gradients make
  /// this noisy, so it is diagnostic only.
  double max_rel_error() const;
  bool passed(double tolerance) const {
    return coords > 0 && rel_error < tolerance &&
           double(nonsmooth) <= max_nonsmooth_fraction * double(coords);
  }
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Compares tape gradients against central finite differences.
///
/// The scalar objective is sum(fn() * R) with R a fixed random tensor, so
/// every output element contributes. Errors are
/// ||g_analytic - g_numeric||_2 / max(||g_analytic||_2, ||g_numeric||_2)
/// over the checked coordinates (0 when both are zero), per tensor and over
/// all tensors together. Coordinates flagged as non-smooth (see
/// GradcheckOptions) are counted but excluded from both.
GradcheckReport check_gradients(const std::function<Tensor()>& fn,
                                const NamedTensors& wrt,
                                const GradcheckOptions& options = {});

}  // namespace MSV_PRECISION_NS
}  // namespace msv
