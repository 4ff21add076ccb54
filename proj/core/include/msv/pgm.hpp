#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "msv/tensor.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

/// Binary P5 with maxval 255. Header errors throw FormatError naming the
/// byte offset; a short payload throws IntegrityError.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// 1 x 1 x H x W tensor of pixel / 255.
Tensor image_to_tensor(const GrayImage& image);
/// 1 x 1 x H x W tensor of the raw byte values (class indices for masks).
Tensor mask_to_tensor(const GrayImage& mask);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
