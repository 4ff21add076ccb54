#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msv/encoder.hpp"
#include "msv/lms.hpp"
#include "msv/losses.hpp"
#include "msv/msaa.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// Which decoder stages MSAA aggregates. kMiddle centres on the 28x28 stage
/// (for 112x112 inputs) with its 14x14 and final 56x56 neighbours; kTop
/// centres on the final stage with the two stages before it.
enum class MsaaPlacement { kMiddle, kTop };

struct ModelConfig {
  std::size_t num_classes = 2;  // classes in the label maps, background included
  Task task = Task::kMulticlass;
  std::size_t in_channels = 1;
  std::array<std::size_t, kEncoderStages> channels{32, 64, 128, 256};
  std::array<std::array<std::size_t, 2>, kDecoderStages> windows{
      {{7, 7}, {7, 7}, {4, 4}, {4, 4}}};
  std::size_t d_state = 8;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  MsaaPlacement msaa_placement = MsaaPlacement::kMiddle;
  MsaaPooling msaa_pooling = MsaaPooling::kLocal;
  bool use_lms = true;
  bool use_aux = true;
  bool use_msaa = true;
  std::uint64_t seed = 0;

  real epsilon = real(0.4);
  real dice_smooth = real(1.0);
  real xce_weight = real(0.5);
  real dice_weight = real(0.5);

  /// Logit channels: 1 for the binary task, num_classes otherwise.
  std::size_t output_channels() const {
    return task == Task::kBinary ? 1 : num_classes;
  }
  /// epsilon actually applied (0 when auxiliary heads are off).
  real effective_epsilon() const { return use_aux ? epsilon : real(0); }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// Intermediate activations of one forward pass.
struct ForwardTrace {
  EncoderFeatures encoder;
  DecoderOutput decoder;
  Tensor msaa;  // undefined when MSAA is off
  PredictionSet preds;
};

class MsvMamba {
 public:
  static MsvMamba create(const ModelConfig& config);

  /// image: N x in_channels x H x W, H and W divisible by 16. Every
  /// prediction map has the image's spatial extents.
  PredictionSet forward(const Tensor& image);
  ForwardTrace forward_traced(const Tensor& image);

  void set_mode(NormMode mode);
  /// Every tensor of the model, including running statistics (marked
  /// non-trainable) and the auxiliary loss weights.
  ParameterList parameters() const;
  LossConfig loss_config() const;
  const ModelConfig& config() const { return config_; }
  const Tensor& raw_omega() const { return raw_omega_; }

 private:
  ModelConfig config_;
  Encoder encoder_;
  Decoder decoder_;
  std::optional<MsaaParams> msaa_;
  Conv2dParams main_head_;
  std::vector<Conv2dParams> aux_heads_;
  Tensor raw_omega_;
};

/// Label map from an N x 1 x H x W class-index tensor.
Labels labels_from_tensor(const Tensor& mask);

/// Hard class map per pixel: argmax over channels, or logit > 0 in binary mode.
Labels predict_classes(const Tensor& logits, Task task);

/// Human-readable L2 norms of every stage activation, for diagnostics.
std::string activation_report(const ForwardTrace& trace);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
