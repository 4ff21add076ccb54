#pragma once

#include <string>

#include "msv/nn.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// How the spatial path pools F_2 before its 7x7 conv: `kLocal` keeps every
/// channel (2x2 stride-1 avg + max pooling), `kChannel` reduces across
/// channels to a single map first.
enum class MsaaPooling { kLocal, kChannel };

struct MsaaConfig {
  std::size_t in_channels = 0;   // C1, width of the concatenated input
  std::size_t out_channels = 0;  // width handed to the segmentation head
  std::size_t reduction = 4;     // C2 = C1 / reduction
  MsaaPooling pooling = MsaaPooling::kLocal;

  std::size_t reduced_channels() const { return in_channels / reduction; }
};

struct MsaaParams {
  MsaaConfig config;
  Conv2dParams reduce;         // 1x1, C1 -> C2
  Conv2dParams conv3, conv5, conv7;  // C2 -> C2
  Conv2dParams spatial_conv7;  // 7x7 over the pooled map
  Conv2dParams channel_conv;   // 1x1, C1 -> C2
  Conv2dParams channel_fc;     // fully connected C2 -> C2 (as 1x1 conv)
  Conv2dParams out_proj;       // 1x1, C2 -> out_channels

  static MsaaParams create(const MsaaConfig& config, Rng& rng);
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// Resamples both neighbours to the centre stage's extents (bilinear) and
/// concatenates [centre, previous, next] along channels.
Tensor align_and_concat(const Tensor& centre, const Tensor& previous,
                        const Tensor& next);

/// F_1 = reduce(F); F_2 = conv3(F_1) + conv5(F_1) + conv7(F_1);
/// returns spatial_conv7(avg(F_2) + max(F_2)) * sigmoid(F_2).
Tensor spatial_path(const Tensor& fhat, const MsaaParams& p);

/// sigmoid(fc(relu(channel_conv(gap(F) + gmp(F))))), shape N x C2 x 1 x 1;
/// it broadcasts over the spatial map when fused.
Tensor channel_path(const Tensor& fhat, const MsaaParams& p);

struct MsaaFusion {
  Tensor gated;   // F_spatial * F_channel
  Tensor output;  // out_proj(gated)
};

MsaaFusion msaa_fuse(const Tensor& spatial, const Tensor& channel,
                     const MsaaParams& p);

/// Full module on three adjacent decoder stages; output keeps the centre
/// stage's spatial extents and has config.out_channels channels.
Tensor msaa(const Tensor& centre, const Tensor& previous, const Tensor& next,
            const MsaaParams& p);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
