#include "msv/encoder.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

ResidualBlock ResidualBlock::create(std::size_t in_channels,
                                    std::size_t out_channels,
                                    std::size_t stride, Rng& rng) {
  ResidualBlock b;
  b.conv1 = Conv2dParams::create(in_channels, out_channels, 3, rng, stride);
  b.bn1 = BatchNormState::create(out_channels);
  b.conv2 = Conv2dParams::create(out_channels, out_channels, 3, rng);
  // Batch norm cancels any per-channel offset, so these convs carry none.
  b.conv1.bias = Tensor();
  b.conv2.bias = Tensor();
  b.bn2 = BatchNormState::create(out_channels);
  if (in_channels != out_channels || stride != 1) {
    b.projection = Conv2dParams::create(in_channels, out_channels, 1, rng,
                                        stride);
  }
  return b;
}

Tensor ResidualBlock::forward(const Tensor& x) {
  const Tensor main =
      batchnorm(conv2d(relu(batchnorm(conv2d(x, conv1), bn1)), conv2), bn2);
  const Tensor skip = projection ? conv2d(x, *projection) : x;
  if (main.shape() != skip.shape()) {
    throw ShapeError("residual_block: main path " + main.shape().str() +
                     " does not match skip path " + skip.shape().str());
  }
  return relu(add(main, skip));
}

void ResidualBlock::set_mode(NormMode mode) {
  bn1.mode = mode;
  bn2.mode = mode;
}

void ResidualBlock::collect(ParameterList& out,
                            const std::string& prefix) const {
  conv1.collect(out, prefix + "conv1.");
  bn1.collect(out, prefix + "bn1.");
  conv2.collect(out, prefix + "conv2.");
  bn2.collect(out, prefix + "bn2.");
  if (projection) projection->collect(out, prefix + "proj.");
}

Encoder Encoder::create(const EncoderConfig& config, Rng& rng) {
  Encoder e;
  e.config_ = config;
  std::size_t in = config.in_channels;
  for (std::size_t k = 0; k < kEncoderStages; ++k) {
    e.blocks_.push_back(ResidualBlock::create(in, config.channels[k], 2, rng));
    in = config.channels[k];
  }
  return e;
}

EncoderFeatures Encoder::forward(const Tensor& image) {
  if (image.rank() != 4 || image.dim(1) != config_.in_channels) {
    throw ShapeError("encoder: expected N x " +
                     std::to_string(config_.in_channels) + " x H x W, got " +
                     image.shape().str());
  }
  if (image.dim(2) % 16 != 0 || image.dim(3) % 16 != 0) {
    throw ShapeError("encoder: input extents " + std::to_string(image.dim(2)) +
                     "x" + std::to_string(image.dim(3)) +
                     " must be divisible by 16");
  }
  EncoderFeatures f;
  Tensor x = image;
  for (std::size_t k = 0; k < kEncoderStages; ++k) {
    x = blocks_[k].forward(x);
    f.stages[k] = x;
  }
  return f;
}

void Encoder::set_mode(NormMode mode) {
  for (auto& b : blocks_) b.set_mode(mode);
}

void Encoder::collect(ParameterList& out, const std::string& prefix) const {
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    blocks_[k].collect(out, prefix + "stage" + std::to_string(k + 1) + ".");
  }
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
