#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msv/losses.hpp"
#include "msv/phantom.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

struct Sample {
  std::string id;
  std::string split;  // train, val or test
  GrayImage image;
  GrayImage mask;
};

struct Batch {
  Tensor images;  // N x 1 x H x W in [0, 1]
  Labels labels;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t classes = 2;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  Dataset subset(const std::string& split) const;
  /// Stacks the listed samples; all must share extents.
  Batch batch(std::span<const std::size_t> indices) const;
};

/// Split tag by index: every tenth sample starting at 8 is val, at 9 test.
std::string split_for_index(std::size_t index);

struct SynthOptions {
  std::size_t count = 8;
  std::uint64_t seed = 0;
  std::size_t classes = 3;
  std::size_t height = 112;
  std::size_t width = 112;
  /// Empty: split_for_index. Otherwise every sample gets this tag.
  std::string split;
};

/// In-memory phantoms; sample i uses seed + i.
Dataset make_phantom_dataset(const SynthOptions& options);

/// Writes images/NNNN.pgm, masks/NNNN.pgm and manifest.csv under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& data,
                   const SynthOptions& options);

/// Reads manifest.csv and every image/mask it lists. Throws DataError when
/// extents disagree or a mask value reaches the class count.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
