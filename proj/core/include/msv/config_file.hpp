#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "msv/model.hpp"
#include "msv/optimizer.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 4;
  std::size_t steps = 500;
  std::size_t log_every = 50;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Parses UTF-8 `key = value` lines over `base`. Blank lines and lines
/// starting with '#' are ignored. Unknown keys and malformed values throw
/// ConfigError naming the line.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Every addressable key, one per line; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
