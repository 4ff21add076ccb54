#include "msv/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    s += k[i + r];
  }
  for (double& v : k) v /= s;
  return k;
}

// Separable Gaussian blur with clamped borders.
std::vector<double> blur(const std::vector<double>& src, std::size_t h,
                         std::size_t w, double sigma) {
  if (sigma <= 0) return src;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(src.size()), out(src.size());
  const auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) {
        s += k[i + r] * src[y * w + clampi(int(x) + i, int(w))];
      }
      tmp[y * w + x] = s;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) {
        s += k[i + r] * tmp[clampi(int(y) + i, int(h)) * w + x];
      }
      out[y * w + x] = s;
    }
  }
  return out;
}

}  // namespace

void PhantomSpec::validate() const {
  if (a < 3 || b < 3) throw ConfigError("phantom: semi-axes must be >= 3 px");
  if (classes != 2 && classes != 3) {
    throw ConfigError("phantom: classes must be 2 or 3");
  }
  if (ring < 0 || speckle < 0 || blur_radius < 0) {
    throw ConfigError("phantom: ring, speckle and blur must be >= 0");
  }
  const double oa = a + ring, ob = b + ring;
  const double c = std::cos(theta), s = std::sin(theta);
  const double half_w = std::sqrt(oa * oa * c * c + ob * ob * s * s);
  const double half_h = std::sqrt(oa * oa * s * s + ob * ob * c * c);
  if (cx - half_w < 0 || cx + half_w > double(width) || cy - half_h < 0 ||
      cy + half_h > double(height)) {
    throw ConfigError("phantom: ellipse with ring does not fit the " +
                      std::to_string(height) + "x" + std::to_string(width) +
                      " canvas");
  }
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width;
  const double c = std::cos(spec.theta), s = std::sin(spec.theta);
  Phantom p;
  p.mask = GrayImage{w, h, std::vector<std::uint8_t>(h * w, 0)};
  std::vector<double> intensity(h * w, spec.background);
  const auto inside = [](double u, double v, double a, double b) {
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = double(x) + 0.5 - spec.cx;
      const double dy = double(y) + 0.5 - spec.cy;
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      std::uint8_t cls = 0;
      if (inside(u, v, spec.a, spec.b)) {
        cls = 1;
        intensity[y * w + x] = spec.cavity;
      } else if (spec.ring > 0 &&
                 inside(u, v, spec.a + spec.ring, spec.b + spec.ring)) {
        cls = spec.classes == 3 ? 2 : 0;
        intensity[y * w + x] = spec.wall;
      }
      p.mask.pixels[y * w + x] = cls;
    }
  }
  const auto smooth = blur(intensity, h, w, spec.blur_radius);
  std::vector<double> noise(h * w, 0.0);
  if (spec.speckle > 0) {
    Rng rng(mix_seed(spec.seed, 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& n : noise) n = gauss(rng);
    noise = blur(noise, h, w, spec.blur_radius);
    // Smoothing shrinks the variance; rescale to unit standard deviation.
    double var = 0;
    for (double n : noise) var += n * n;
    var /= double(noise.size());
    if (var > 0) {
      const double k = 1.0 / std::sqrt(var);
      for (double& n : noise) n *= k;
    }
  }
  p.image = GrayImage{w, h, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v = smooth[i] * (1.0 + spec.speckle * noise[i]);
    p.image.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  return p;
}

PhantomSpec random_phantom_spec(std::uint64_t seed, std::size_t classes,
                                std::size_t height, std::size_t width) {
  Rng rng(mix_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto range = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  PhantomSpec s;
  s.height = height;
  s.width = width;
  const double scale = double(std::min(height, width)) / 112.0;
  s.a = range(18, 30) * scale;
  s.b = range(11, 20) * scale;
  s.theta = range(0, std::numbers::pi);
  s.ring = range(3, 6) * scale;
  s.cx = double(width) / 2 + range(-10, 10) * scale;
  s.cy = double(height) / 2 + range(-10, 10) * scale;
  s.speckle = 0.3;
  s.blur_radius = 1.5;
  s.classes = classes;
  s.seed = seed;
  return s;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
