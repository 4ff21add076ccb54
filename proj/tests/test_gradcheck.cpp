#include <gtest/gtest.h>

#include "msv/gradcheck.hpp"
#include "msv/gradcheck_suite.hpp"
#include "msv/nn.hpp"
#include "msv/ops.hpp"

using namespace msv;

TEST(Gradcheck, ConvOnSmallExample) {
  Rng rng(1);
  Tensor x = Tensor::uniform(Shape{1, 2, 6, 6}, rng, -1, 1, true);
  Conv2dParams p = Conv2dParams::create(2, 3, 3, rng);
  for (auto& v : p.bias.mutable_data()) v = std::uniform_real_distribution<real>(-1, 1)(rng);
  GradcheckReport r = check_gradients([&] { return conv2d(x, p); },
                                      {{"x", x}, {"weight", p.weight}, {"bias", p.bias}});
  EXPECT_TRUE(r.passed(1e-3)) << r.rel_error;
}

TEST(Gradcheck, ElementwiseAndMatmul) {
  Rng rng(2);
  Tensor a = Tensor::uniform(Shape{4, 5}, rng, -1, 1, true);
  Tensor b = Tensor::uniform(Shape{5, 3}, rng, -1, 1, true);
  Tensor v = Tensor::uniform(Shape{8}, rng, -1, 1, true);
  EXPECT_TRUE(check_gradients([&] { return matmul(a, b); }, {{"a", a}, {"b", b}}).passed(1e-3));
  EXPECT_TRUE(check_gradients([&] { return exp(v); }, {{"v", v}}).passed(1e-3));
  const GradcheckReport r = check_gradients([&] { return silu(mul(v, v)); }, {{"v", v}});
  EXPECT_TRUE(r.passed(1e-3)) << r.rel_error << " " << r.nonsmooth;
}

TEST(Gradcheck, DetectsAWrongBackward) {
  Rng rng(3);
  Tensor x = Tensor::uniform(Shape{6}, rng, -1, 1, true);
  // y = 2x, but the recorded backward claims dy/dx = 3.
  auto wrong = [&] {
    std::vector<real> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2 * x[i];
    return finish_op("wrong", Tensor(x.shape(), out), {x},
                     [x](std::span<const real> g) {
                       auto gx = x.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 3 * g[i];
                     });
  };
  GradcheckReport r = check_gradients(wrong, {{"x", x}});
  EXPECT_FALSE(r.passed(1e-3));
  EXPECT_NEAR(r.rel_error, 1.0 / 3.0, 1e-2);
}

TEST(Gradcheck, KinksAreExcludedNotFailed) {
  // relu evaluated exactly at its kink for some coordinates.
  Tensor x(Shape{6}, {-0.5f, 0, 0.3f, 0, 0.7f, -0.2f}, true);
  GradcheckReport r = check_gradients([&] { return relu(x); }, {{"x", x}});
  EXPECT_EQ(r.nonsmooth, 2u);
  EXPECT_LT(r.rel_error, 1e-3);
}

TEST(GradcheckSuite, CoversEveryOperation) {
  const auto ops = gradcheck_suite_ops();
  for (const char* name : {"conv2d", "batchnorm", "pooling", "upsample", "selective_scan",
                           "bimamba", "residual_block", "lms_block", "msaa", "xce_binary",
                           "xce_multiclass", "dice", "total_loss"}) {
    EXPECT_NE(std::find(ops.begin(), ops.end(), name), ops.end()) << name;
  }
}

TEST(GradcheckSuite, PassesAtSinglePrecision) {
  GradcheckSuiteResult r = run_gradcheck_suite(5);
  EXPECT_EQ(r.precision, "f32");
  EXPECT_EQ(r.cases.size(), 5 * gradcheck_suite_ops().size());
  for (const auto& c : r.cases) {
    EXPECT_TRUE(c.passed) << c.op << " seed " << c.seed << " rel err " << c.rel_error;
  }
}
