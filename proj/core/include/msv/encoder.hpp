#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "msv/nn.hpp"
#include "msv/params.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// out = relu(bn2(conv2(relu(bn1(conv1(x))))) + skip(x)).
/// conv1 carries the stride; skip is a 1x1 projection when the channel
/// count or the stride changes, identity otherwise.
struct ResidualBlock {
  Conv2dParams conv1;
  BatchNormState bn1;
  Conv2dParams conv2;
  BatchNormState bn2;
  std::optional<Conv2dParams> projection;

  static ResidualBlock create(std::size_t in_channels,
                              std::size_t out_channels, std::size_t stride,
                              Rng& rng);

  Tensor forward(const Tensor& x);
  void set_mode(NormMode mode);
  void collect(ParameterList& out, const std::string& prefix) const;
};

inline Tensor residual_block(const Tensor& x, ResidualBlock& block) {
  return block.forward(x);
}

inline constexpr std::size_t kEncoderStages = 4;

struct EncoderConfig {
  std::size_t in_channels = 1;
  std::array<std::size_t, kEncoderStages> channels{32, 64, 128, 256};
};

/// Stage outputs e_1..e_4; each halves the spatial extents of the previous.
struct EncoderFeatures {
  std::array<Tensor, kEncoderStages> stages;
};

class Encoder {
 public:
  static Encoder create(const EncoderConfig& config, Rng& rng);

  /// image: N x C_in x H x W with H and W divisible by 16.
  EncoderFeatures forward(const Tensor& image);

  void set_mode(NormMode mode);
  void collect(ParameterList& out, const std::string& prefix) const;
  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  std::vector<ResidualBlock> blocks_;
};

}  // namespace MSV_PRECISION_NS
}  // namespace msv
