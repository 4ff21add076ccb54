#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "msv/encoder.hpp"
#include "msv/nn.hpp"
#include "msv/ssm.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// Result of splitting N x C x H x W into m x n windows. `tokens` is
/// (N * windows_per_map) x (m * n) x C; windows are ordered row-major over
/// the window grid, tokens row-major inside each window.
struct WindowPartition {
  Tensor tokens;
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;      // before padding
  std::size_t width = 0;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;
  std::size_t win_h = 0;
  std::size_t win_w = 0;

  std::size_t grid_h() const { return padded_height / win_h; }
  std::size_t grid_w() const { return padded_width / win_w; }
  std::size_t windows_per_map() const { return grid_h() * grid_w(); }
};

/// Zero-pads to multiples of the window when needed; window_merge crops back.
WindowPartition window_partition(const Tensor& f, std::size_t m,
                                 std::size_t n);
Tensor window_merge(const Tensor& tokens, const WindowPartition& layout);

struct LmsConfig {
  std::size_t win_h = 4;
  std::size_t win_w = 4;
  std::size_t channels = 0;
  std::size_t stage = 1;
  std::size_t d_state = 8;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  bool tied_directions = false;
};

/// Channel LayerNorm followed by a bidirectional Mamba block.
struct SpatialScanParams {
  Tensor norm_gamma;
  Tensor norm_beta;
  MambaBlock mamba;

  static SpatialScanParams create(const LmsConfig& config, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// Pixel-level scan: every m x n window is scanned as its own token
/// sequence. Returns scan(F) + scale * F.
Tensor pim(const Tensor& f, const LmsConfig& config,
           const SpatialScanParams& params, const Tensor& scale);

/// Patch-level scan: m x n average pooling gives one token per window, the
/// window grid is scanned as one sequence, and the result is unpooled.
/// Returns unpool(scan(pool(F))) + scale * F.
Tensor pam(const Tensor& f, const LmsConfig& config,
           const SpatialScanParams& params, const Tensor& scale);

/// Intermediate maps of one decoder stage.
struct StageFeatures {
  Tensor input;       // F_l
  Tensor after_pim;   // F'_l
  Tensor after_pam;   // F''_l
  Tensor output;      // F_{l+1}
};

/// One decoder stage. With a skip tensor the block upsamples 2x, projects to
/// the skip width with a 1x1 conv, concatenates the skip and fuses with a
/// 1x1 conv. The final stage has no skip and keeps its resolution.
class LmsBlock {
 public:
  /// `skip_channels` == 0 builds the final, skip-less stage. With
  /// `use_lms` false the PiM/PaM pair is replaced by a residual conv block
  /// of the same width.
  static LmsBlock create(const LmsConfig& config, std::size_t skip_channels,
                         bool use_lms, Rng& rng);

  StageFeatures forward(const Tensor& f, const Tensor& skip);

  const LmsConfig& config() const { return config_; }
  bool uses_lms() const { return !conv_core_.has_value(); }
  std::size_t out_channels() const {
    return skip_channels_ ? skip_channels_ : config_.channels;
  }
  const Tensor& scale() const { return scale_; }
  SpatialScanParams& pim_params() { return pim_; }
  SpatialScanParams& pam_params() { return pam_; }

  void set_mode(NormMode mode);
  void collect(ParameterList& out, const std::string& prefix) const;

 private:
  LmsConfig config_;
  std::size_t skip_channels_ = 0;
  SpatialScanParams pim_;
  SpatialScanParams pam_;
  Tensor scale_;
  std::optional<ResidualBlock> conv_core_;
  std::optional<Conv2dParams> up_proj_;
  std::optional<Conv2dParams> fuse_;
};

inline constexpr std::size_t kDecoderStages = 4;

struct DecoderConfig {
  std::array<std::size_t, kEncoderStages> encoder_channels{32, 64, 128, 256};
  /// Window per decoder stage, deepest first.
  std::array<std::array<std::size_t, 2>, kDecoderStages> windows{
      {{7, 7}, {7, 7}, {4, 4}, {4, 4}}};
  std::size_t d_state = 8;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  bool use_lms = true;
};

/// Decoder stage outputs, deepest first. Stage k (< 3) fuses encoder stage
/// 3 - k; the last stage refines the shallowest map without a skip.
struct DecoderOutput {
  std::array<StageFeatures, kDecoderStages> stages;
};

class Decoder {
 public:
  static Decoder create(const DecoderConfig& config, Rng& rng);

  DecoderOutput forward(const EncoderFeatures& features);

  std::size_t stage_channels(std::size_t k) const {
    return blocks_[k].out_channels();
  }
  LmsBlock& block(std::size_t k) { return blocks_[k]; }
  void set_mode(NormMode mode);
  void collect(ParameterList& out, const std::string& prefix) const;

 private:
  DecoderConfig config_;
  std::vector<LmsBlock> blocks_;
};

}  // namespace MSV_PRECISION_NS
}  // namespace msv
