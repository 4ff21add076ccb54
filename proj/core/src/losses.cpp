#include "msv/losses.hpp"

#include <algorithm>
#include <cmath>

namespace msv {
inline namespace MSV_PRECISION_NS {

Labels::Labels(std::size_t n_, std::size_t h_, std::size_t w_,
               std::vector<std::int32_t> v)
    : n(n_), h(h_), w(w_), values(std::move(v)) {
  if (values.size() != n * h * w) {
    throw ShapeError("Labels: " + std::to_string(values.size()) +
                     " values for " + std::to_string(n) + "x" +
                     std::to_string(h) + "x" + std::to_string(w));
  }
}

const char* task_name(Task task) {
  return task == Task::kBinary ? "binary" : "multiclass";
}

namespace {

std::size_t class_count(std::size_t channels, Task task) {
  return task == Task::kBinary ? 2 : channels;
}

void check_logits(const char* op, const Tensor& logits, const Labels& labels,
                  Task task) {
  if (logits.rank() != 4 || logits.dim(0) != labels.n ||
      logits.dim(2) != labels.h || logits.dim(3) != labels.w) {
    throw ShapeError(std::string(op) + ": logits " + logits.shape().str() +
                     " do not match labels " + std::to_string(labels.n) +
                     "x" + std::to_string(labels.h) + "x" +
                     std::to_string(labels.w));
  }
  if (task == Task::kBinary && logits.dim(1) != 1) {
    throw ShapeError(std::string(op) +
                     ": binary task expects one channel, got " +
                     logits.shape().str());
  }
  if (task == Task::kMulticlass && logits.dim(1) < 2) {
    throw ShapeError(std::string(op) +
                     ": multiclass task needs at least two channels");
  }
  const auto classes = static_cast<std::int32_t>(
      class_count(logits.dim(1), task));
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    const std::int32_t v = labels.values[i];
    if (v < 0 || v >= classes) {
      const std::size_t x = i % labels.w;
      const std::size_t y = (i / labels.w) % labels.h;
      const std::size_t b = i / (labels.w * labels.h);
      throw DataError(std::string(op) + ": label " + std::to_string(v) +
                      " at sample " + std::to_string(b) + " pixel (" +
                      std::to_string(y) + ", " + std::to_string(x) +
                      ") is outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

Tensor xce_loss(const Tensor& logits, const Labels& labels, Task task) {
  check_logits("xce_loss", logits, labels, task);
  const std::size_t c = logits.dim(1);
  const std::size_t hw = labels.h * labels.w;
  const std::size_t pixels = labels.pixels();
  const auto z = logits.data();
  double total = 0;
  if (task == Task::kBinary) {
    for (std::size_t i = 0; i < pixels; ++i) {
      const double v = z[i];
      const double y = labels.values[i];
      total += std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::abs(v)));
    }
  } else {
    for (std::size_t b = 0; b < labels.n; ++b) {
      for (std::size_t p = 0; p < hw; ++p) {
        const real* base = z.data() + b * c * hw + p;
        double mx = base[0];
        for (std::size_t k = 1; k < c; ++k) mx = std::max<double>(mx, base[k * hw]);
        double se = 0;
        for (std::size_t k = 0; k < c; ++k) se += std::exp(base[k * hw] - mx);
        const auto y = static_cast<std::size_t>(labels.values[b * hw + p]);
        total += mx + std::log(se) - base[y * hw];
      }
    }
  }
  Tensor out = Tensor::scalar(static_cast<real>(total / double(pixels)));
  return finish_op(
      "xce_loss", out, {logits},
      [logits, labels_v = labels.values, task, c, hw,
       n = labels.n](std::span<const real> g) {
        const auto z = logits.data();
        auto gz = logits.grad_buffer();
        const real k = g[0] / static_cast<real>(n * hw);
        if (task == Task::kBinary) {
          for (std::size_t i = 0; i < z.size(); ++i) {
            const real s = real(1) / (real(1) + std::exp(-z[i]));
            gz[i] += k * (s - static_cast<real>(labels_v[i]));
          }
          return;
        }
        std::vector<real> prob(c);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t base = b * c * hw + p;
            real mx = z[base];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[base + j * hw]);
            real se = 0;
            for (std::size_t j = 0; j < c; ++j) {
              prob[j] = std::exp(z[base + j * hw] - mx);
              se += prob[j];
            }
            const auto y = static_cast<std::size_t>(labels_v[b * hw + p]);
            for (std::size_t j = 0; j < c; ++j) {
              gz[base + j * hw] +=
                  k * (prob[j] / se - (j == y ? real(1) : real(0)));
            }
          }
        }
      });
}

Tensor soft_dice_loss(const Tensor& probs, const Labels& labels, Task task,
                      real smooth) {
  check_logits("soft_dice_loss", probs, labels, task);
  const std::size_t c = probs.dim(1);
  const std::size_t hw = labels.h * labels.w;
  // Channel index of each foreground class and the label it stands for.
  std::vector<std::pair<std::size_t, std::int32_t>> fg;
  if (task == Task::kBinary) {
    fg.push_back({0, 1});
  } else {
    for (std::size_t k = 1; k < c; ++k) fg.push_back({k, static_cast<std::int32_t>(k)});
  }
  const auto pv = probs.data();
  std::vector<double> inter(fg.size(), 0), denom(fg.size(), 0);
  double loss = 0;
  for (std::size_t f = 0; f < fg.size(); ++f) {
    double i_sum = 0, p_sum = 0, g_sum = 0;
    for (std::size_t b = 0; b < labels.n; ++b) {
      for (std::size_t p = 0; p < hw; ++p) {
        const double pr = pv[(b * c + fg[f].first) * hw + p];
        const double gt = labels.values[b * hw + p] == fg[f].second ? 1.0 : 0.0;
        i_sum += pr * gt;
        p_sum += pr;
        g_sum += gt;
      }
    }
    inter[f] = i_sum;
    denom[f] = p_sum + g_sum + smooth;
    loss += 1.0 - (2.0 * i_sum + smooth) / denom[f];
  }
  loss /= static_cast<double>(fg.size());
  Tensor out = Tensor::scalar(static_cast<real>(loss));
  return finish_op(
      "soft_dice_loss", out, {probs},
      [probs, labels_v = labels.values, fg, inter, denom, smooth, c, hw,
       n = labels.n](std::span<const real> g) {
        auto gp = probs.grad_buffer();
        const double k = g[0] / static_cast<double>(fg.size());
        for (std::size_t f = 0; f < fg.size(); ++f) {
          const double num = 2.0 * inter[f] + smooth;
          const double d2 = denom[f] * denom[f];
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t p = 0; p < hw; ++p) {
              const double gt = labels_v[b * hw + p] == fg[f].second ? 1.0 : 0.0;
              gp[(b * c + fg[f].first) * hw + p] +=
                  static_cast<real>(k * -(2.0 * gt * denom[f] - num) / d2);
            }
          }
        }
      });
}

Tensor class_probabilities(const Tensor& logits, Task task) {
  return task == Task::kBinary ? sigmoid(logits) : softmax(logits, 1);
}

Tensor dice_loss(const Tensor& logits, const Labels& labels, Task task,
                 real smooth) {
  check_logits("dice_loss", logits, labels, task);
  return soft_dice_loss(class_probabilities(logits, task), labels, task,
                        smooth);
}

Tensor aux_head(const Tensor& features, const Conv2dParams& head,
                std::size_t out_h, std::size_t out_w) {
  const Tensor logits = conv2d(features, head);
  if (logits.dim(2) == out_h && logits.dim(3) == out_w) return logits;
  return resize_bilinear(logits, out_h, out_w);
}

LossOutput total_loss(const PredictionSet& preds, const Labels& labels,
                      const LossConfig& config) {
  if (config.epsilon < 0) {
    throw ConfigError("total_loss: epsilon must be >= 0");
  }
  LossOutput out;
  const Tensor xce = xce_loss(preds.logits_main, labels, config.task);
  const Tensor dice = dice_loss(preds.logits_main, labels, config.task,
                                config.dice_smooth);
  out.l_main = add(scale(xce, config.xce_weight), scale(dice, config.dice_weight));
  if (preds.logits_aux.empty()) {
    out.total = out.l_main;
    return out;
  }
  if (!config.raw_omega.defined() ||
      config.raw_omega.numel() != preds.logits_aux.size()) {
    throw ConfigError(
        "total_loss: " + std::to_string(preds.logits_aux.size()) +
        " auxiliary heads but raw_omega has " +
        std::to_string(config.raw_omega.defined() ? config.raw_omega.numel() : 0) +
        " entries");
  }
  for (const Tensor& aux : preds.logits_aux) {
    out.l_aux.push_back(xce_loss(aux, labels, config.task));
  }
  const Tensor omega =
      softmax(reshape(config.raw_omega, Shape{config.raw_omega.numel()}), 0);
  out.omega.assign(omega.data().begin(), omega.data().end());
  const Tensor weighted = sum(mul(omega, concat(std::span<const Tensor>(out.l_aux), 0)));
  out.total = add(out.l_main, scale(weighted, config.epsilon));
  return out;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
