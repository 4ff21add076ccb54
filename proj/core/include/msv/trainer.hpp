#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msv/checkpoint.hpp"
#include "msv/config_file.hpp"
#include "msv/dataset.hpp"
#include "msv/metrics_csv.hpp"
#include "msv/model.hpp"
#include "msv/optimizer.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

struct StepResult {
  std::uint64_t step = 0;  // 1-based index of the step just taken
  double loss_total = 0;
  double loss_main = 0;
  double loss_aux_sum = 0;  // loss_total - loss_main
  double grad_norm = 0;
  std::vector<real> omega;
};

/// Owns the model, the optimizer and the batch-sampling RNG. Every step
/// draws min(batch_size, |data|) distinct samples.
class Trainer {
 public:
  Trainer(const RunConfig& config, Dataset data);
  /// Rebuilds the exact training state stored in `ckpt`.
  static Trainer resume(const Checkpoint& ckpt, Dataset data);

  /// forward, total loss, backward, Adam update. A non-finite loss throws
  /// TrainingError carrying the per-stage activation norms.
  StepResult step();

  std::uint64_t steps_done() const { return step_; }
  MsvMamba& model() { return model_; }
  const RunConfig& config() const { return config_; }
  Checkpoint checkpoint() const;

 private:
  RunConfig config_;
  Dataset data_;
  MsvMamba model_;
  ParameterList params_;
  Adam opt_;
  Rng rng_;
  std::uint64_t step_ = 0;
};

/// 2|P & G| / (|P| + |G|) for one class of one sample; 1 when both are empty.
double hard_dice(const Labels& pred, const Labels& truth, std::size_t sample,
                 std::int32_t cls);

struct EvalResult {
  std::vector<MetricsRow> rows;  // one per foreground class, then "mean"
  /// per_sample_dice[s][k]: sample s, foreground class k + 1.
  std::vector<std::vector<double>> per_sample_dice;
  std::vector<double> class_dice;
  double mean_dice = 0;
  double loss_main = 0;
  double loss_aux_sum = 0;
  double loss_total = 0;
};

/// Eval-mode pass over every sample in `data` without recording gradients.
/// Class Dice is averaged over samples; mean_dice averages the classes.
/// Throws ConfigError on an empty dataset.
EvalResult evaluate(MsvMamba& model, const Dataset& data,
                    const std::string& split, std::uint64_t step,
                    std::size_t batch_size = 4);

}  // namespace MSV_PRECISION_NS
}  // namespace msv
