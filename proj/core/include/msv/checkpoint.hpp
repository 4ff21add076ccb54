#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msv/optimizer.hpp"
#include "msv/params.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::vector<std::uint32_t> extents;
  std::vector<float> values;
};

struct CheckpointSlot {
  std::string name;
  std::vector<float> m;
  std::vector<float> v;
};

/// On disk, little-endian:
///   "MSVM" | u32 version | u64 step
///   u32 count | count x (u32 len, name, u32 rank, rank x u32, f32 values)
///   u64 adam_t | u32 count | count x (u32 len, name, u32 n, n x f32 m, n x f32 v)
///   u32 len, rng state | u32 len, config text
///   u32 CRC-32 of every preceding byte
struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<CheckpointTensor> tensors;
  std::uint64_t adam_t = 0;
  std::vector<CheckpointSlot> slots;
  std::string rng_state;
  std::string config_text;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic or version and IntegrityError on
/// truncation, trailing bytes or checksum mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies every parameter (trainable or not) into ckpt.tensors.
void export_parameters(const ParameterList& params, Checkpoint& ckpt);
/// Overwrites parameter values by name. Every parameter must be present
/// with matching extents.
void import_parameters(const ParameterList& params, const Checkpoint& ckpt);

void export_optimizer(const Adam& opt, Checkpoint& ckpt);
void import_optimizer(Adam& opt, const Checkpoint& ckpt);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
