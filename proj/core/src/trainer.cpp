#include "msv/trainer.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "msv/fpenv.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

Trainer::Trainer(const RunConfig& config, Dataset data)
    : config_(config),
      data_(std::move(data)),
      model_(MsvMamba::create(config.model)),
      params_(model_.parameters()),
      opt_(params_, config.train.adam),
      rng_(mix_seed(config.model.seed, 1)) {
  if (data_.empty()) throw ConfigError("training set is empty");
  if (data_.classes != config_.model.num_classes) {
    throw ConfigError("data has " + std::to_string(data_.classes) +
                      " classes, config expects " +
                      std::to_string(config_.model.num_classes));
  }
}

Trainer Trainer::resume(const Checkpoint& ckpt, Dataset data) {
  Trainer t(parse_config(ckpt.config_text), std::move(data));
  import_parameters(t.params_, ckpt);
  import_optimizer(t.opt_, ckpt);
  t.rng_ = deserialize_rng(ckpt.rng_state);
  t.step_ = ckpt.step;
  return t;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.step = step_;
  export_parameters(params_, c);
  export_optimizer(opt_, c);
  c.rng_state = serialize_rng(rng_);
  c.config_text = format_config(config_);
  return c;
}

StepResult Trainer::step() {
  const FlushDenormalsGuard ftz;
  Tape::active().clear();
  const std::size_t n = data_.size();
  const std::size_t b = std::min(config_.train.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng_)]);
  }
  order.resize(b);
  const Batch batch = data_.batch(order);

  model_.set_mode(NormMode::kTrain);
  const ForwardTrace trace = model_.forward_traced(batch.images);
  const LossOutput loss = total_loss(trace.preds, batch.labels, model_.loss_config());
  StepResult r;
  r.step = step_ + 1;
  r.loss_total = loss.total.item();
  r.loss_main = loss.l_main.item();
  r.loss_aux_sum = r.loss_total - r.loss_main;
  r.omega = loss.omega;
  if (!std::isfinite(r.loss_total)) {
    Tape::active().clear();
    throw TrainingError("non-finite loss at step " + std::to_string(r.step) +
                        "\n" + activation_report(trace));
  }
  backward(loss.total);
  r.grad_norm = gradient_norm(params_);
  if (!std::isfinite(r.grad_norm)) {
    throw TrainingError("non-finite gradient at step " + std::to_string(r.step) +
                        "\n" + activation_report(trace));
  }
  opt_.step();
  opt_.zero_grad();
  step_ = r.step;
  return r;
}

double hard_dice(const Labels& pred, const Labels& truth, std::size_t sample,
                 std::int32_t cls) {
  if (pred.h != truth.h || pred.w != truth.w || sample >= pred.n ||
      sample >= truth.n) {
    throw ShapeError("hard_dice: prediction and truth do not align");
  }
  const std::size_t hw = pred.h * pred.w;
  std::size_t inter = 0, p = 0, g = 0;
  for (std::size_t i = sample * hw; i < (sample + 1) * hw; ++i) {
    const bool a = pred.values[i] == cls;
    const bool b = truth.values[i] == cls;
    inter += a && b;
    p += a;
    g += b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * double(inter) / double(p + g);
}

EvalResult evaluate(MsvMamba& model, const Dataset& data,
                    const std::string& split, std::uint64_t step,
                    std::size_t batch_size) {
  if (data.empty()) throw ConfigError("evaluate: dataset is empty");
  const FlushDenormalsGuard ftz;
  const std::size_t classes = model.config().num_classes;
  const std::size_t fg = classes - 1;
  const Task task = model.config().task;
  model.set_mode(NormMode::kEval);
  NoGradGuard no_grad;
  EvalResult r;
  r.class_dice.assign(fg, 0.0);
  const LossConfig lc = model.loss_config();
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = data.batch(idx);
    const PredictionSet preds = model.forward(batch.images);
    const LossOutput loss = total_loss(preds, batch.labels, lc);
    const double w = double(count) / double(data.size());
    r.loss_main += w * loss.l_main.item();
    r.loss_total += w * loss.total.item();
    const Labels pred = predict_classes(preds.logits_main, task);
    for (std::size_t s = 0; s < count; ++s) {
      std::vector<double> d(fg);
      for (std::size_t k = 0; k < fg; ++k) {
        d[k] = hard_dice(pred, batch.labels, s, static_cast<std::int32_t>(k + 1));
        r.class_dice[k] += d[k] / double(data.size());
      }
      r.per_sample_dice.push_back(std::move(d));
    }
  }
  model.set_mode(NormMode::kTrain);
  r.loss_aux_sum = r.loss_total - r.loss_main;
  r.mean_dice = std::accumulate(r.class_dice.begin(), r.class_dice.end(), 0.0) /
                double(fg);
  for (std::size_t k = 0; k < fg; ++k) {
    r.rows.push_back({step, split, std::to_string(k + 1), r.class_dice[k],
                      r.loss_main, r.loss_aux_sum, r.loss_total});
  }
  r.rows.push_back({step, split, "mean", r.mean_dice, r.loss_main,
                    r.loss_aux_sum, r.loss_total});
  return r;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
