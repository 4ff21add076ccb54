#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msv/nn.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

/// Integer class map, N x H x W, row-major.
struct Labels {
  std::size_t n = 0, h = 0, w = 0;
  std::vector<std::int32_t> values;

  Labels() = default;
  Labels(std::size_t n_, std::size_t h_, std::size_t w_,
         std::vector<std::int32_t> v);
  std::int32_t at(std::size_t b, std::size_t y, std::size_t x) const {
    return values[(b * h + y) * w + x];
  }
  std::size_t pixels() const { return n * h * w; }
};

/// kBinary: one logit channel, sigmoid, labels in {0, 1}.
/// kMulticlass: C logit channels, softmax, labels in [0, C).
enum class Task { kBinary, kMulticlass };

const char* task_name(Task task);

struct PredictionSet {
  Tensor logits_main;               // N x C x H x W at label resolution
  std::vector<Tensor> logits_aux;   // one per decoder stage, same shape
};

struct LossConfig {
  real epsilon = real(0.4);
  Task task = Task::kMulticlass;
  real dice_smooth = real(1.0);
  real xce_weight = real(0.5);
  real dice_weight = real(0.5);
  /// Learnable logits behind the auxiliary weights; omega = softmax(raw).
  Tensor raw_omega;
};

struct LossOutput {
  Tensor total;
  Tensor l_main;
  std::vector<Tensor> l_aux;
  std::vector<real> omega;
};

/// Mean pixel cross-entropy. Throws DataError naming the first label that
/// is out of range for the task.
Tensor xce_loss(const Tensor& logits, const Labels& labels, Task task);

/// Soft Dice loss on probabilities, averaged over the foreground classes
/// (class 1 in binary mode, 1..C-1 otherwise). Sums run over the batch.
Tensor soft_dice_loss(const Tensor& probs, const Labels& labels, Task task,
                      real smooth = real(1.0));

/// sigmoid / softmax of the logits, then soft_dice_loss.
Tensor dice_loss(const Tensor& logits, const Labels& labels, Task task,
                 real smooth = real(1.0));

/// Class probabilities for the task (sigmoid or channel softmax).
Tensor class_probabilities(const Tensor& logits, Task task);

/// 1x1 conv to the class count, then bilinear resize to out_h x out_w.
Tensor aux_head(const Tensor& features, const Conv2dParams& head,
                std::size_t out_h, std::size_t out_w);

/// total = xce_weight * XCE + dice_weight * Dice on the main logits, plus
/// epsilon * sum_i omega_i * XCE(aux_i).
LossOutput total_loss(const PredictionSet& preds, const Labels& labels,
                      const LossConfig& config);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
