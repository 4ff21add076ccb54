#pragma once

#include <cstddef>
#include <string>

#include "msv/ops.hpp"
#include "msv/params.hpp"
#include "msv/tensor.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// Square-kernel 2-D convolution weights, C_out x C_in x k x k.
struct Conv2dParams {
  Tensor weight;
  Tensor bias;  // [C_out], or undefined for a bias-free conv
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// He-uniform weights, zero bias, "same" padding (k / 2).
  /// k must be one of 1, 3, 5, 7.
  static Conv2dParams create(std::size_t in_channels,
                             std::size_t out_channels, std::size_t kernel,
                             Rng& rng, std::size_t stride = 1);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }

  void collect(ParameterList& out, const std::string& prefix) const;
};

/// x: N x C_in x H x W. Lowered to im2col + GEMM.
Tensor conv2d(const Tensor& x, const Conv2dParams& p);

enum class NormMode { kTrain, kEval };

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  real momentum = real(0.1);
  real eps = real(1e-5);
  NormMode mode = NormMode::kTrain;

  static BatchNormState create(std::size_t channels);

  /// Running statistics are registered as non-trainable.
  void collect(ParameterList& out, const std::string& prefix) const;
};

/// Per-channel normalization over N, H, W. Train mode uses batch statistics
/// and updates the running estimates; eval mode uses the running estimates.
Tensor batchnorm(const Tensor& x, BatchNormState& s);

/// Non-overlapping m x n pooling (stride = window). H % m and W % n must be 0.
Tensor avg_pool(const Tensor& x, std::size_t m, std::size_t n);
/// Backward routes to the first maximum in row-major order of each window.
Tensor max_pool(const Tensor& x, std::size_t m, std::size_t n);
/// Nearest replication of every value over an m x n block.
Tensor unpool(const Tensor& y, std::size_t m, std::size_t n);

/// Stride-1 k x k pooling whose window is clipped at the bottom/right border,
/// so the output keeps the input's spatial size.
Tensor avg_pool_same(const Tensor& x, std::size_t k);
Tensor max_pool_same(const Tensor& x, std::size_t k);

/// Mean / max across channels: N x C x H x W -> N x 1 x H x W.
Tensor channel_avg_pool(const Tensor& x);
Tensor channel_max_pool(const Tensor& x);

/// Bilinear resampling with half-pixel centers (align_corners = false).
Tensor upsample_bilinear(const Tensor& x, std::size_t factor = 2);
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// N x C x H x W -> N x C x 1 x 1.
Tensor global_avg_pool(const Tensor& x);
Tensor global_max_pool(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes each vector along the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps = real(1e-5));

/// Depthwise 1-D convolution over sequences x: B x L x D with weight D x K.
/// Causal (taps t-K+1..t) when `reverse` is false, anti-causal otherwise.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, bool reverse);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
