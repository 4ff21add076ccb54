#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "msv/ops.hpp"
#include "msv/ssm.hpp"
#include "support/naive_scan.hpp"

using namespace msv;

TEST(SelectiveScan, MatchesNaiveRecurrenceOnRandomConfigs) {
  std::mt19937_64 gen(2024);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + gen() % 64;
    const std::size_t dm = 1 + gen() % 8;
    const std::size_t ds = 1 + gen() % 8;
    const std::size_t nb = 1 + gen() % 2;
    Rng rng(gen());
    SsmParams p = SsmParams::create(dm, ds, rng);
    for (auto& v : p.a_log.mutable_data())
      v = std::uniform_real_distribution<real>(-1, 1)(rng);
    p.b_dt.mutable_data()[0] = std::uniform_real_distribution<real>(-2, 1)(rng);
    Tensor x = Tensor::uniform(Shape{nb, len, dm}, rng, -1, 1);
    const bool reverse = trial % 2 == 1;
    Tensor y = selective_scan(
        x, p, reverse ? ScanDirection::kReverse : ScanDirection::kForward);
    const auto ref = oracle::naive_scan(x, p, reverse);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      worst = std::max(worst, std::abs(double(y[i]) - ref[i]));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(SelectiveScan, HandDerivedScalarCase) {
  // A = -1, dt = softplus(0) = ln 2, B = C = 1, no skip, x = [1, 1, 1].
  SsmParams p;
  p.a_log = Tensor(Shape{1, 1}, {0});
  p.w_b = Tensor(Shape{1, 1}, {1});
  p.w_c = Tensor(Shape{1, 1}, {1});
  p.w_dt = Tensor(Shape{1, 1}, {0});
  p.b_dt = Tensor::scalar(0);
  p.d_skip = Tensor(Shape{1}, {0});
  Tensor y = selective_scan(Tensor(Shape{1, 3, 1}, {1, 1, 1}), p,
                            ScanDirection::kForward);
  EXPECT_NEAR(y[0], 0.693147, 1e-5);
  EXPECT_NEAR(y[1], 1.039721, 1e-5);
  EXPECT_NEAR(y[2], 1.213007, 1e-5);
}

TEST(SelectiveScan, ReverseEqualsFlippedForward) {
  Rng rng(5);
  SsmParams p = SsmParams::create(4, 3, rng);
  Tensor x = Tensor::uniform(Shape{2, 11, 4}, rng, -1, 1);
  Tensor rev = selective_scan(x, p, ScanDirection::kReverse);
  Tensor ref = flip(selective_scan(flip(x, 1), p, ScanDirection::kForward), 1);
  for (std::size_t i = 0; i < rev.numel(); ++i) EXPECT_NEAR(rev[i], ref[i], 1e-6);
}

TEST(SelectiveScan, CausalInForwardDirection) {
  Rng rng(6);
  SsmParams p = SsmParams::create(3, 4, rng);
  Tensor x = Tensor::uniform(Shape{1, 8, 3}, rng, -1, 1);
  Tensor y1 = selective_scan(x, p, ScanDirection::kForward);
  Tensor x2 = x.detach();
  x2.mutable_data()[7 * 3] += 1;  // perturb the last token only
  Tensor y2 = selective_scan(x2, p, ScanDirection::kForward);
  for (std::size_t i = 0; i < 7 * 3; ++i) EXPECT_EQ(y1[i], y2[i]);
}

TEST(SelectiveScan, RejectsMismatchedWidth) {
  Rng rng(0);
  SsmParams p = SsmParams::create(4, 2, rng);
  EXPECT_THROW(selective_scan(Tensor::zeros(Shape{1, 3, 5}), p,
                              ScanDirection::kForward),
               ShapeError);
  EXPECT_THROW(selective_scan(Tensor::zeros(Shape{3, 4}), p,
                              ScanDirection::kForward),
               ShapeError);
}

TEST(BiMamba, TiedBlockIsReversalEquivariant) {
  Rng rng(7);
  MambaConfig cfg;
  cfg.d_model = 6;
  cfg.d_state = 4;
  cfg.tied = true;
  MambaBlock block = MambaBlock::create(cfg, rng);
  Tensor x = Tensor::uniform(Shape{2, 13, 6}, rng, -1, 1);
  Tensor a = bimamba(flip(x, 1), block);
  Tensor b = flip(bimamba(x, block), 1);
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, double(std::abs(a[i] - b[i])));
  EXPECT_LT(worst, 1e-6);
}

TEST(BiMamba, UntiedBlockIsNotEquivariant) {
  Rng rng(8);
  MambaConfig cfg;
  cfg.d_model = 4;
  MambaBlock block = MambaBlock::create(cfg, rng);
  Tensor x = Tensor::uniform(Shape{1, 9, 4}, rng, -1, 1);
  Tensor a = bimamba(flip(x, 1), block);
  Tensor b = flip(bimamba(x, block), 1);
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, double(std::abs(a[i] - b[i])));
  EXPECT_GT(worst, 1e-4);
}

TEST(BiMamba, ShapePreserved) {
  Rng rng(9);
  MambaConfig cfg;
  cfg.d_model = 5;
  MambaBlock block = MambaBlock::create(cfg, rng);
  Tensor y = block.forward(Tensor::zeros(Shape{3, 7, 5}));
  EXPECT_EQ(y.shape(), (Shape{3, 7, 5}));
  EXPECT_THROW(block.forward(Tensor::zeros(Shape{3, 7, 4})), ShapeError);
}
