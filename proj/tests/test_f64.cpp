#include <gtest/gtest.h>

#include "msv/gradcheck.hpp"
#include "msv/gradcheck_suite.hpp"
#include "msv/lms.hpp"
#include "msv/msaa.hpp"
#include "msv/ops.hpp"
#include "msv/ssm.hpp"

using namespace msv;

static_assert(std::is_same_v<real, double>);

TEST(F64, ScanGradcheckShortSequence) {
  Rng rng(1);
  SsmParams p = SsmParams::create(2, 2, rng);
  p.b_dt.mutable_data()[0] = 0.3;
  ScanGradcheckOptions opt;
  opt.length = 5;
  for (ScanDirection dir : {ScanDirection::kForward, ScanDirection::kReverse}) {
    opt.direction = dir;
    GradcheckReport r = scan_gradcheck(p, opt);
    EXPECT_TRUE(r.passed(1e-5)) << r.rel_error;
  }
}

TEST(F64, SpatialPathBelow1e4) {
  Rng rng(2);
  MsaaConfig cfg;
  cfg.in_channels = 8;
  cfg.out_channels = 3;
  MsaaParams p = MsaaParams::create(cfg, rng);
  Tensor fhat = Tensor::uniform(Shape{1, 8, 6, 6}, rng, -1, 1, true);
  GradcheckReport r = check_gradients([&] { return spatial_path(fhat, p); },
                                      {{"fhat", fhat}, {"reduce", p.reduce.weight},
                                       {"conv5", p.conv5.weight},
                                       {"spatial_conv7", p.spatial_conv7.weight}});
  EXPECT_LT(r.rel_error, 1e-4);
  EXPECT_TRUE(r.passed(1e-4));
}

TEST(F64, FullMsaaOn8x8Below1e4) {
  Rng rng(3);
  MsaaConfig cfg;
  cfg.in_channels = 12;
  cfg.out_channels = 4;
  MsaaParams p = MsaaParams::create(cfg, rng);
  Tensor c = Tensor::uniform(Shape{1, 4, 8, 8}, rng, -1, 1, true);
  Tensor a = Tensor::uniform(Shape{1, 4, 4, 4}, rng, -1, 1, true);
  Tensor b = Tensor::uniform(Shape{1, 4, 16, 16}, rng, -1, 1, true);
  GradcheckReport r = check_gradients(
      [&] { return msaa(c, a, b, p); },
      {{"centre", c}, {"previous", a}, {"next", b}, {"channel_fc", p.channel_fc.weight},
       {"out_proj", p.out_proj.weight}});
  EXPECT_TRUE(r.passed(1e-4)) << r.rel_error;
}

TEST(F64, LmsBlockOn8x8Below1e4) {
  Rng rng(4);
  LmsConfig cfg;
  cfg.channels = 4;
  cfg.win_h = cfg.win_w = 4;
  cfg.d_state = 2;
  LmsBlock block = LmsBlock::create(cfg, 0, true, rng);
  Tensor f = Tensor::uniform(Shape{1, 4, 8, 8}, rng, -1, 1, true);
  GradcheckReport r = check_gradients([&] { return block.forward(f, Tensor()).output; },
                                      {{"f", f}, {"scale", block.scale()}});
  EXPECT_TRUE(r.passed(1e-4)) << r.rel_error;
}

TEST(F64, SuitePassesAtTightTolerance) {
  GradcheckSuiteResult r = run_gradcheck_suite(5);
  EXPECT_EQ(r.precision, "f64");
  EXPECT_EQ(r.tolerance, 1e-5);
  for (const auto& c : r.cases) {
    EXPECT_TRUE(c.passed) << c.op << " seed " << c.seed << " rel err " << c.rel_error;
  }
}
