#include <benchmark/benchmark.h>

#include "msv/ops.hpp"
#include "msv/ssm.hpp"

using namespace msv;

static void BM_SelectiveScanForward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto dm = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  SsmParams p = SsmParams::create(dm, 8, rng);
  Tensor x = Tensor::uniform(Shape{4, len, dm}, rng, -1, 1);
  NoGradGuard no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(selective_scan(x, p, ScanDirection::kForward));
  }
  state.SetItemsProcessed(state.iterations() * 4 * len * dm);
}
BENCHMARK(BM_SelectiveScanForward)->Args({64, 32})->Args({256, 32})->Args({1024, 16});

static void BM_SelectiveScanBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto dm = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  SsmParams p = SsmParams::create(dm, 8, rng);
  for (Tensor* t : {&p.a_log, &p.w_b, &p.w_c, &p.w_dt, &p.b_dt, &p.d_skip}) {
    t->set_requires_grad(true);
  }
  Tensor x = Tensor::uniform(Shape{4, len, dm}, rng, -1, 1, true);
  for (auto _ : state) {
    Tensor y = sum(selective_scan(x, p, ScanDirection::kForward));
    backward(y);
    x.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * 4 * len * dm);
}
BENCHMARK(BM_SelectiveScanBackward)->Args({64, 32})->Args({256, 32});
