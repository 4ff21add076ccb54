#include "msv/msaa.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

MsaaParams MsaaParams::create(const MsaaConfig& config, Rng& rng) {
  if (config.in_channels == 0 || config.reduction == 0 ||
      config.in_channels % config.reduction != 0) {
    throw ConfigError("MSAA: input width " +
                      std::to_string(config.in_channels) +
                      " must be a positive multiple of the reduction " +
                      std::to_string(config.reduction));
  }
  const std::size_t c1 = config.in_channels;
  const std::size_t c2 = config.reduced_channels();
  MsaaParams p;
  p.config = config;
  p.reduce = Conv2dParams::create(c1, c2, 1, rng);
  p.conv3 = Conv2dParams::create(c2, c2, 3, rng);
  p.conv5 = Conv2dParams::create(c2, c2, 5, rng);
  p.conv7 = Conv2dParams::create(c2, c2, 7, rng);
  const std::size_t pooled =
      config.pooling == MsaaPooling::kLocal ? c2 : std::size_t{1};
  p.spatial_conv7 = Conv2dParams::create(pooled, c2, 7, rng);
  p.channel_conv = Conv2dParams::create(c1, c2, 1, rng);
  p.channel_fc = Conv2dParams::create(c2, c2, 1, rng);
  p.out_proj = Conv2dParams::create(c2, config.out_channels, 1, rng);
  return p;
}

void MsaaParams::collect(ParameterList& out, const std::string& prefix) const {
  reduce.collect(out, prefix + "reduce.");
  conv3.collect(out, prefix + "conv3.");
  conv5.collect(out, prefix + "conv5.");
  conv7.collect(out, prefix + "conv7.");
  spatial_conv7.collect(out, prefix + "spatial_conv7.");
  channel_conv.collect(out, prefix + "channel_conv.");
  channel_fc.collect(out, prefix + "channel_fc.");
  out_proj.collect(out, prefix + "out_proj.");
}

Tensor align_and_concat(const Tensor& centre, const Tensor& previous,
                        const Tensor& next) {
  if (centre.rank() != 4 || previous.rank() != 4 || next.rank() != 4 ||
      previous.dim(0) != centre.dim(0) || next.dim(0) != centre.dim(0)) {
    throw ShapeError("align_and_concat: expected three N x C x H x W maps, got " +
                     centre.shape().str() + ", " + previous.shape().str() +
                     ", " + next.shape().str());
  }
  const std::size_t h = centre.dim(2), w = centre.dim(3);
  return concat({centre, resize_bilinear(previous, h, w),
                 resize_bilinear(next, h, w)},
                1);
}

Tensor spatial_path(const Tensor& fhat, const MsaaParams& p) {
  if (fhat.rank() != 4 || fhat.dim(1) != p.config.in_channels) {
    throw ShapeError("spatial_path: expected N x " +
                     std::to_string(p.config.in_channels) +
                     " x H x W, got " + fhat.shape().str());
  }
  const Tensor f1 = conv2d(fhat, p.reduce);
  const Tensor f2 =
      add(add(conv2d(f1, p.conv3), conv2d(f1, p.conv5)), conv2d(f1, p.conv7));
  const Tensor pooled =
      p.config.pooling == MsaaPooling::kLocal
          ? add(avg_pool_same(f2, 2), max_pool_same(f2, 2))
          : add(channel_avg_pool(f2), channel_max_pool(f2));
  const Tensor attended = conv2d(pooled, p.spatial_conv7);
  if (attended.shape() != f2.shape()) {
    throw ShapeError("spatial_path: attention map " + attended.shape().str() +
                     " does not match F_2 " + f2.shape().str());
  }
  return mul(attended, sigmoid(f2));
}

Tensor channel_path(const Tensor& fhat, const MsaaParams& p) {
  if (fhat.rank() != 4 || fhat.dim(1) != p.config.in_channels) {
    throw ShapeError("channel_path: expected N x " +
                     std::to_string(p.config.in_channels) +
                     " x H x W, got " + fhat.shape().str());
  }
  const Tensor f3 = add(global_avg_pool(fhat), global_max_pool(fhat));
  return sigmoid(conv2d(relu(conv2d(f3, p.channel_conv)), p.channel_fc));
}

MsaaFusion msaa_fuse(const Tensor& spatial, const Tensor& channel,
                     const MsaaParams& p) {
  MsaaFusion f;
  f.gated = mul(spatial, channel);
  f.output = conv2d(f.gated, p.out_proj);
  return f;
}

Tensor msaa(const Tensor& centre, const Tensor& previous, const Tensor& next,
            const MsaaParams& p) {
  const Tensor fhat = align_and_concat(centre, previous, next);
  return msaa_fuse(spatial_path(fhat, p), channel_path(fhat, p), p).output;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
