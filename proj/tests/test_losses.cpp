#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "msv/losses.hpp"
#include "msv/ops.hpp"
#include "msv/trainer.hpp"

using namespace msv;

namespace {

Labels random_labels(std::size_t n, std::size_t h, std::size_t w,
                     std::size_t classes, Rng& rng) {
  std::vector<std::int32_t> v(n * h * w);
  for (auto& x : v) x = std::int32_t(rng() % classes);
  return Labels(n, h, w, std::move(v));
}

LossConfig config_with(std::size_t heads, real epsilon, Task task, Rng& rng) {
  LossConfig cfg;
  cfg.epsilon = epsilon;
  cfg.task = task;
  cfg.raw_omega = Tensor::uniform(Shape{heads}, rng, -1, 1, true);
  return cfg;
}

}  // namespace

TEST(XceLoss, UniformTwoClassIsLn2) {
  Labels labels(1, 4, 4, std::vector<std::int32_t>(16, 1));
  Tensor logits = Tensor::full(Shape{1, 2, 4, 4}, real(0.3));
  EXPECT_NEAR(xce_loss(logits, labels, Task::kMulticlass).item(), std::log(2.0), 1e-6);
  Tensor binary = Tensor::zeros(Shape{1, 1, 4, 4});
  EXPECT_NEAR(xce_loss(binary, labels, Task::kBinary).item(), std::log(2.0), 1e-6);
}

TEST(XceLoss, ConfidentCorrectBinaryIsNearZero) {
  Labels labels(1, 2, 2, {1, 1, 0, 0});
  Tensor logits(Shape{1, 1, 2, 2}, {1e4, 1e4, -1e4, -1e4});
  EXPECT_LT(xce_loss(logits, labels, Task::kBinary).item(), 1e-4);
}

TEST(XceLoss, MatchesPerPixelLogSumExp) {
  Rng rng(21);
  const std::size_t c = 4, h = 8, w = 8;
  Tensor logits = Tensor::uniform(Shape{2, c, h, w}, rng, -4, 4);
  Labels labels = random_labels(2, h, w, c, rng);
  double ref = 0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double mx = -1e30;
        for (std::size_t k = 0; k < c; ++k)
          mx = std::max(mx, double(logits[((b * c + k) * h + y) * w + x]));
        double se = 0;
        for (std::size_t k = 0; k < c; ++k)
          se += std::exp(double(logits[((b * c + k) * h + y) * w + x]) - mx);
        const std::size_t t = std::size_t(labels.at(b, y, x));
        ref += mx + std::log(se) - logits[((b * c + t) * h + y) * w + x];
      }
  ref /= double(2 * h * w);
  EXPECT_NEAR(xce_loss(logits, labels, Task::kMulticlass).item(), ref, 1e-6);
}

TEST(XceLoss, OutOfRangeLabelNamesPixel) {
  Labels labels(1, 2, 2, {0, 1, 3, 0});
  try {
    xce_loss(Tensor::zeros(Shape{1, 3, 2, 2}), labels, Task::kMulticlass);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("(1, 0)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(xce_loss(Tensor::zeros(Shape{1, 1, 2, 2}),
                        Labels(1, 2, 2, {0, 2, 0, 0}), Task::kBinary),
               DataError);
}

TEST(DiceLoss, DisjointFourPixelCase) {
  // |P| = |G| = 4, no overlap, smooth 1: 1 - 1/9.
  std::vector<real> p(16, 0);
  std::vector<std::int32_t> g(16, 0);
  for (int i = 0; i < 4; ++i) {
    p[i] = 1;
    g[8 + i] = 1;
  }
  Tensor probs(Shape{1, 1, 4, 4}, p);
  EXPECT_NEAR(soft_dice_loss(probs, Labels(1, 4, 4, g), Task::kBinary, 1).item(),
              1.0 - 1.0 / 9.0, 1e-6);
}

TEST(DiceLoss, PerfectPredictionIsZero) {
  Rng rng(22);
  const std::size_t c = 3;
  Labels labels = random_labels(2, 5, 5, c, rng);
  std::vector<real> onehot(2 * c * 25, 0);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 25; ++i)
      onehot[(b * c + std::size_t(labels.values[b * 25 + i])) * 25 + i] = 1;
  Tensor probs(Shape{2, c, 5, 5}, onehot);
  EXPECT_NEAR(soft_dice_loss(probs, labels, Task::kMulticlass).item(), 0, 1e-7);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::int32_t k = 1; k < 3; ++k)
      EXPECT_EQ(hard_dice(labels, labels, b, k), 1.0);
}

TEST(DiceLoss, MatchesDirectSummation) {
  Rng rng(23);
  const std::size_t c = 3, hw = 36;
  Tensor logits = Tensor::uniform(Shape{2, c, 6, 6}, rng, -3, 3);
  Labels labels = random_labels(2, 6, 6, c, rng);
  Tensor probs = class_probabilities(logits, Task::kMulticlass);
  double ref = 0;
  for (std::size_t k = 1; k < c; ++k) {
    double inter = 0, sp = 0, sg = 0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const double pv = probs[(b * c + k) * hw + i];
        const double gv = labels.values[b * hw + i] == std::int32_t(k) ? 1 : 0;
        inter += pv * gv;
        sp += pv;
        sg += gv;
      }
    ref += 1 - (2 * inter + 1) / (sp + sg + 1);
  }
  ref /= double(c - 1);
  EXPECT_NEAR(dice_loss(logits, labels, Task::kMulticlass, 1).item(), ref, 1e-6);
}

TEST(DiceLoss, BoundedForRandomInputs) {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = Tensor::uniform(Shape{1, 3, 4, 4}, rng, -5, 5);
    Labels labels = random_labels(1, 4, 4, 3, rng);
    const real d = dice_loss(logits, labels, Task::kMulticlass).item();
    EXPECT_GE(d, 0);
    EXPECT_LT(d, 1.0 + 1e-6);
    EXPECT_GE(xce_loss(logits, labels, Task::kMulticlass).item(), 0);
  }
}

TEST(TotalLoss, ZeroEpsilonGivesMainLoss) {
  Rng rng(25);
  PredictionSet preds;
  preds.logits_main = Tensor::uniform(Shape{1, 3, 4, 4}, rng, -1, 1);
  for (int i = 0; i < 4; ++i)
    preds.logits_aux.push_back(Tensor::uniform(Shape{1, 3, 4, 4}, rng, -1, 1));
  Labels labels = random_labels(1, 4, 4, 3, rng);
  LossConfig cfg = config_with(4, 0, Task::kMulticlass, rng);
  LossOutput out = total_loss(preds, labels, cfg);
  EXPECT_EQ(out.total.item(), out.l_main.item());
}

TEST(TotalLoss, EqualAuxLossesMakeOmegaIrrelevant) {
  Rng rng(26);
  PredictionSet preds;
  preds.logits_main = Tensor::uniform(Shape{1, 2, 4, 4}, rng, -1, 1);
  Tensor aux = Tensor::uniform(Shape{1, 2, 4, 4}, rng, -1, 1);
  for (int i = 0; i < 4; ++i) preds.logits_aux.push_back(aux);
  Labels labels = random_labels(1, 4, 4, 2, rng);
  const real a = xce_loss(aux, labels, Task::kMulticlass).item();
  for (int trial = 0; trial < 5; ++trial) {
    LossConfig cfg = config_with(4, real(0.4), Task::kMulticlass, rng);
    for (auto& v : cfg.raw_omega.mutable_data()) v *= real(3 * trial);
    LossOutput out = total_loss(preds, labels, cfg);
    EXPECT_NEAR(out.total.item(), out.l_main.item() + 0.4 * a, 1e-6);
  }
}

TEST(TotalLoss, ReconstructsFromFields) {
  Rng rng(27);
  PredictionSet preds;
  preds.logits_main = Tensor::uniform(Shape{2, 3, 4, 4}, rng, -1, 1);
  for (int i = 0; i < 4; ++i)
    preds.logits_aux.push_back(Tensor::uniform(Shape{2, 3, 4, 4}, rng, -2, 2));
  Labels labels = random_labels(2, 4, 4, 3, rng);
  LossConfig cfg = config_with(4, real(0.4), Task::kMulticlass, rng);
  LossOutput out = total_loss(preds, labels, cfg);
  double omega_sum = 0, weighted = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_GT(out.omega[i], 0);
    omega_sum += out.omega[i];
    weighted += out.omega[i] * out.l_aux[i].item();
  }
  EXPECT_NEAR(omega_sum, 1, 1e-6);
  EXPECT_NEAR(out.total.item(), out.l_main.item() + 0.4 * weighted, 1e-6);
}

TEST(TotalLoss, EqualWeightArithmetic) {
  // L_main = 1, eps = 0.4, omega = 1/4 each, L_aux = 1 each -> 1.4.
  const double omega = 0.25, eps = 0.4;
  double total = 1.0;
  for (int i = 0; i < 4; ++i) total += eps * omega * 1.0;
  EXPECT_NEAR(total, 1.4, 1e-12);
  // The same through total_loss: uniform logits give L_aux = ln 2 each.
  PredictionSet preds;
  preds.logits_main = Tensor::zeros(Shape{1, 2, 2, 2});
  for (int i = 0; i < 4; ++i) preds.logits_aux.push_back(Tensor::zeros(Shape{1, 2, 2, 2}));
  LossConfig cfg;
  cfg.raw_omega = Tensor::zeros(Shape{4}, true);
  LossOutput out = total_loss(preds, Labels(1, 2, 2, {0, 1, 1, 0}), cfg);
  for (real w : out.omega) EXPECT_NEAR(w, 0.25, 1e-7);
  EXPECT_NEAR(out.total.item(), out.l_main.item() + 0.4 * std::log(2.0), 1e-6);
}

TEST(TotalLoss, PermutingStagesWithWeightsIsConsistent) {
  Rng rng(28);
  PredictionSet preds;
  preds.logits_main = Tensor::uniform(Shape{1, 3, 4, 4}, rng, -1, 1);
  for (int i = 0; i < 4; ++i)
    preds.logits_aux.push_back(Tensor::uniform(Shape{1, 3, 4, 4}, rng, -2, 2));
  Labels labels = random_labels(1, 4, 4, 3, rng);
  LossConfig cfg = config_with(4, real(0.4), Task::kMulticlass, rng);
  const real base = total_loss(preds, labels, cfg).total.item();
  const std::size_t perm[] = {2, 0, 3, 1};
  PredictionSet permuted;
  permuted.logits_main = preds.logits_main;
  std::vector<real> raw(4);
  for (std::size_t i = 0; i < 4; ++i) {
    permuted.logits_aux.push_back(preds.logits_aux[perm[i]]);
    raw[i] = cfg.raw_omega[perm[i]];
  }
  LossConfig pcfg = cfg;
  pcfg.raw_omega = Tensor(Shape{4}, raw, true);
  EXPECT_NEAR(total_loss(permuted, labels, pcfg).total.item(), base, 1e-6);
}

TEST(TotalLoss, GradientReachesAuxHeadsAndOmega) {
  Rng rng(29);
  PredictionSet preds;
  preds.logits_main = Tensor::uniform(Shape{1, 2, 4, 4}, rng, -1, 1, true);
  for (int i = 0; i < 4; ++i)
    preds.logits_aux.push_back(Tensor::uniform(Shape{1, 2, 4, 4}, rng, -2, 2, true));
  Labels labels = random_labels(1, 4, 4, 2, rng);
  LossConfig cfg = config_with(4, real(0.4), Task::kMulticlass, rng);
  backward(total_loss(preds, labels, cfg).total);
  auto norm = [](const Tensor& t) {
    double s = 0;
    for (real g : t.grad()) s += double(g) * g;
    return std::sqrt(s);
  };
  for (const Tensor& aux : preds.logits_aux) EXPECT_GT(norm(aux), 0);
  EXPECT_GT(norm(cfg.raw_omega), 0);
}

TEST(TotalLoss, HeadCountMismatchIsConfigError) {
  Rng rng(30);
  PredictionSet preds;
  preds.logits_main = Tensor::zeros(Shape{1, 2, 2, 2});
  preds.logits_aux.assign(3, Tensor::zeros(Shape{1, 2, 2, 2}));
  LossConfig cfg = config_with(4, real(0.4), Task::kMulticlass, rng);
  EXPECT_THROW(total_loss(preds, Labels(1, 2, 2, {0, 0, 0, 0}), cfg), ConfigError);
}

TEST(AuxHead, ZeroWeightsGiveBiasAndUpsample) {
  Rng rng(31);
  Conv2dParams head = Conv2dParams::create(4, 3, 1, rng);
  for (auto& v : head.weight.mutable_data()) v = 0;
  head.bias.mutable_data()[1] = real(0.5);
  Tensor out = aux_head(Tensor::uniform(Shape{1, 4, 14, 14}, rng, -1, 1), head, 112, 112);
  EXPECT_EQ(out.shape(), (Shape{1, 3, 112, 112}));
  for (std::size_t i = 0; i < 112 * 112; ++i) EXPECT_FLOAT_EQ(out[112 * 112 + i], 0.5f);
}
