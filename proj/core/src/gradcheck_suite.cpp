#include "msv/gradcheck_suite.hpp"

#include <algorithm>
#include <numeric>

#include "msv/encoder.hpp"
#include "msv/lms.hpp"
#include "msv/losses.hpp"
#include "msv/msaa.hpp"
#include "msv/ssm.hpp"

namespace msv {
inline namespace MSV_PRECISION_NS {

namespace {

using CaseFn = std::function<GradcheckReport(std::uint64_t seed)>;

struct SuiteCase {
  std::string op;
  CaseFn run;
};

// Piecewise-linear compositions (relu, max pooling) use a shorter step at
// f32 so fewer probes straddle a kink.
#ifdef MSV_USE_F64
constexpr real kPiecewiseStep = kDefaultFdStep;
#else
constexpr real kPiecewiseStep = real(1e-3);
#endif

GradcheckOptions fd_options(std::uint64_t seed, real step = kDefaultFdStep) {
  GradcheckOptions o;
  o.seed = seed;
  o.step = step;
  return o;
}

Tensor input(Shape shape, Rng& rng) {
  return Tensor::uniform(shape, rng, real(-1), real(1), true);
}

// Values spaced 0.05 apart in random order, so finite differences never
// change which element of a window is the maximum.
Tensor distinct_input(Shape shape, Rng& rng) {
  std::vector<real> v(shape.numel());
  std::iota(v.begin(), v.end(), real(0));
  std::shuffle(v.begin(), v.end(), rng);
  for (real& x : v) x = real(0.05) * x - real(0.025) * static_cast<real>(v.size());
  return Tensor(shape, std::move(v), true);
}

void add_conv(NamedTensors& wrt, const std::string& name, const Conv2dParams& p) {
  wrt.push_back({name + ".weight", p.weight});
  wrt.push_back({name + ".bias", p.bias});
}

void add_all(NamedTensors& wrt, const ParameterList& params) {
  for (const auto& p : params) {
    if (p.trainable) wrt.push_back({p.name, p.tensor});
  }
}

void set_requires_grad(const ParameterList& params) {
  for (const auto& p : params) {
    if (p.trainable) Tensor(p.tensor).set_requires_grad(true);
  }
}

// Initial step sizes are tiny (dt down to 1e-3), which leaves a_log with
// gradients below the finite-difference noise floor. Checks run at
// dt around softplus(0) instead.
void widen_step_sizes(const ParameterList& params, Rng& rng) {
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (const auto& p : params) {
    const auto& n = p.name;
    if (n.size() >= 4 && n.compare(n.size() - 4, 4, "b_dt") == 0) {
      Tensor t = p.tensor;
      for (real& v : t.mutable_data()) v = static_cast<real>(dist(rng));
    }
  }
}

Labels random_labels(std::size_t n, std::size_t h, std::size_t w,
                     std::int32_t classes, Rng& rng) {
  std::uniform_int_distribution<std::int32_t> pick(0, classes - 1);
  std::vector<std::int32_t> v(n * h * w);
  for (auto& x : v) x = pick(rng);
  return Labels(n, h, w, std::move(v));
}

std::vector<SuiteCase> build_cases() {
  std::vector<SuiteCase> cases;
  cases.push_back({"conv2d", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 1));
    const Tensor x = input(Shape{2, 2, 5, 5}, rng);
    const auto p3 = Conv2dParams::create(2, 3, 3, rng);
    const auto p1 = Conv2dParams::create(3, 2, 1, rng, 2);
    NamedTensors wrt{{"x", x}};
    add_conv(wrt, "k3", p3);
    add_conv(wrt, "k1s2", p1);
    return check_gradients([=] { return conv2d(conv2d(x, p3), p1); }, wrt,
                           fd_options(seed));
  }});
  cases.push_back({"batchnorm", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 2));
    const Tensor x = input(Shape{3, 2, 3, 3}, rng);
    auto bn = std::make_shared<BatchNormState>(BatchNormState::create(2));
    bn->gamma = Tensor::uniform(Shape{2}, rng, real(0.5), real(1.5), true);
    bn->beta = input(Shape{2}, rng);
    return check_gradients([x, bn] { return batchnorm(x, *bn); },
                           {{"x", x}, {"gamma", bn->gamma}, {"beta", bn->beta}},
                           fd_options(seed));
  }});
  cases.push_back({"pooling", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 3));
    const Tensor x = distinct_input(Shape{1, 2, 4, 6}, rng);
    const Tensor y = input(Shape{1, 2, 2, 3}, rng);
    return check_gradients(
        [=] {
          return concat({reshape(avg_pool(x, 2, 2), Shape{12}),
                         reshape(max_pool(x, 2, 3), Shape{8}),
                         reshape(avg_pool_same(x, 2), Shape{48}),
                         reshape(max_pool_same(x, 2), Shape{48}),
                         reshape(channel_avg_pool(x), Shape{24}),
                         reshape(channel_max_pool(x), Shape{24}),
                         reshape(global_avg_pool(x), Shape{2}),
                         reshape(global_max_pool(x), Shape{2}),
                         reshape(unpool(y, 2, 2), Shape{48})},
                        0);
        },
        {{"x", x}, {"y", y}}, fd_options(seed));
  }});
  cases.push_back({"upsample", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 4));
    const Tensor x = input(Shape{1, 2, 3, 4}, rng);
    return check_gradients(
        [=] {
          return concat({reshape(upsample_bilinear(x, 2), Shape{96}),
                         reshape(resize_bilinear(x, 5, 7), Shape{70})},
                        0);
        },
        {{"x", x}}, fd_options(seed));
  }});
  for (const auto dir : {ScanDirection::kForward, ScanDirection::kReverse}) {
    const std::string name =
        dir == ScanDirection::kForward ? "selective_scan" : "selective_scan_reverse";
    cases.push_back({name, [dir](std::uint64_t seed) {
      Rng rng(mix_seed(seed, 5));
      const SsmParams p = SsmParams::create(3, 4, rng);
      ParameterList params;
      p.collect(params, "");
      widen_step_sizes(params, rng);
      ScanGradcheckOptions o;
      o.batch = 2;
      o.length = 6;
      o.direction = dir;
      o.seed = seed;
      o.fd = fd_options(seed);
      return scan_gradcheck(p, o);
    }});
  }
  cases.push_back({"bimamba", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 6));
    MambaConfig mc;
    mc.d_model = 3;
    mc.d_state = 4;
    const MambaBlock block = MambaBlock::create(mc, rng);
    ParameterList params;
    block.collect(params, "");
    set_requires_grad(params);
    widen_step_sizes(params, rng);
    const Tensor x = input(Shape{2, 5, 3}, rng);
    NamedTensors wrt{{"x", x}};
    add_all(wrt, params);
    return check_gradients([=] { return bimamba(x, block); }, wrt,
                           fd_options(seed));
  }});
  cases.push_back({"residual_block", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 7));
    auto block = std::make_shared<ResidualBlock>(ResidualBlock::create(2, 3, 2, rng));
    ParameterList params;
    block->collect(params, "");
    const Tensor x = input(Shape{2, 2, 4, 4}, rng);
    NamedTensors wrt{{"x", x}};
    add_all(wrt, params);
    return check_gradients([=] { return residual_block(x, *block); }, wrt,
                           fd_options(seed, kPiecewiseStep));
  }});
  cases.push_back({"lms_block", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 8));
    LmsConfig lc;
    lc.win_h = 2;
    lc.win_w = 2;
    lc.channels = 4;
    lc.d_state = 3;
    auto block = std::make_shared<LmsBlock>(LmsBlock::create(lc, 2, true, rng));
    ParameterList params;
    block->collect(params, "");
    set_requires_grad(params);
    widen_step_sizes(params, rng);
    const Tensor f = input(Shape{1, 4, 4, 4}, rng);
    const Tensor skip = input(Shape{1, 2, 8, 8}, rng);
    NamedTensors wrt{{"f", f}, {"skip", skip}};
    add_all(wrt, params);
    return check_gradients([=] { return block->forward(f, skip).output; }, wrt,
                           fd_options(seed));
  }});
  cases.push_back({"msaa", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 9));
    MsaaConfig mc;
    mc.in_channels = 8;
    mc.out_channels = 3;
    const MsaaParams p = MsaaParams::create(mc, rng);
    ParameterList params;
    p.collect(params, "");
    const Tensor centre = input(Shape{1, 4, 8, 8}, rng);
    const Tensor prev = input(Shape{1, 2, 4, 4}, rng);
    const Tensor next = input(Shape{1, 2, 16, 16}, rng);
    NamedTensors wrt{{"centre", centre}, {"previous", prev}, {"next", next}};
    add_all(wrt, params);
    return check_gradients([=] { return msaa(centre, prev, next, p); }, wrt,
                           fd_options(seed, kPiecewiseStep));
  }});
  cases.push_back({"xce_binary", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 10));
    const Tensor z = Tensor::uniform(Shape{2, 1, 3, 3}, rng, real(-3), real(3), true);
    const Labels y = random_labels(2, 3, 3, 2, rng);
    return check_gradients([=] { return xce_loss(z, y, Task::kBinary); },
                           {{"logits", z}}, fd_options(seed));
  }});
  cases.push_back({"xce_multiclass", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 11));
    const Tensor z = Tensor::uniform(Shape{2, 4, 3, 3}, rng, real(-3), real(3), true);
    const Labels y = random_labels(2, 3, 3, 4, rng);
    return check_gradients([=] { return xce_loss(z, y, Task::kMulticlass); },
                           {{"logits", z}}, fd_options(seed));
  }});
  cases.push_back({"dice", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 12));
    const Tensor z = Tensor::uniform(Shape{2, 3, 4, 4}, rng, real(-2), real(2), true);
    const Tensor zb = Tensor::uniform(Shape{2, 1, 4, 4}, rng, real(-2), real(2), true);
    const Labels y = random_labels(2, 4, 4, 3, rng);
    const Labels yb = random_labels(2, 4, 4, 2, rng);
    return check_gradients(
        [=] {
          return concat({dice_loss(z, y, Task::kMulticlass),
                         dice_loss(zb, yb, Task::kBinary)},
                        0);
        },
        {{"logits", z}, {"logits_binary", zb}}, fd_options(seed));
  }});
  cases.push_back({"total_loss", [](std::uint64_t seed) {
    Rng rng(mix_seed(seed, 13));
    PredictionSet preds;
    preds.logits_main = Tensor::uniform(Shape{2, 3, 4, 4}, rng, real(-2), real(2), true);
    NamedTensors wrt{{"main", preds.logits_main}};
    for (int k = 0; k < 4; ++k) {
      preds.logits_aux.push_back(
          Tensor::uniform(Shape{2, 3, 4, 4}, rng, real(-2), real(2), true));
      wrt.push_back({"aux" + std::to_string(k + 1), preds.logits_aux.back()});
    }
    LossConfig lc;
    lc.raw_omega = input(Shape{4}, rng);
    wrt.push_back({"raw_omega", lc.raw_omega});
    const Labels y = random_labels(2, 4, 4, 3, rng);
    return check_gradients([=] { return total_loss(preds, y, lc).total; }, wrt,
                           fd_options(seed));
  }});
  return cases;
}

}  // namespace

std::vector<std::string> gradcheck_suite_ops() {
  std::vector<std::string> names;
  for (const auto& c : build_cases()) names.push_back(c.op);
  return names;
}

GradcheckSuiteResult run_gradcheck_suite(
    std::size_t seeds, const std::function<void(const GradcheckCase&)>& on_case) {
  GradcheckSuiteResult result;
  result.precision = kPrecisionName;
  result.tolerance = kDefaultGradTolerance;
  for (const auto& c : build_cases()) {
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      const GradcheckReport report = c.run(seed);
      GradcheckCase gc;
      gc.op = c.op;
      gc.seed = seed;
      gc.rel_error = report.rel_error;
      gc.coords = report.coords;
      gc.nonsmooth = report.nonsmooth;
      double worst = -1;
      for (const auto& t : report.tensors) {
        if (t.rel_error > worst) {
          worst = t.rel_error;
          gc.worst_tensor = t.name;
        }
      }
      gc.passed = report.passed(result.tolerance);
      if (on_case) on_case(gc);
      result.cases.push_back(std::move(gc));
    }
  }
  return result;
}

}  // namespace MSV_PRECISION_NS
}  // namespace msv
