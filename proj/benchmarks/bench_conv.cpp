#include <benchmark/benchmark.h>

#include "msv/nn.hpp"
#include "msv/ops.hpp"

using namespace msv;

static void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  Rng rng(3);
  Conv2dParams p = Conv2dParams::create(c, c, k, rng);
  Tensor x = Tensor::uniform(Shape{4, c, hw, hw}, rng, -1, 1);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  state.SetItemsProcessed(state.iterations() * 4 * c * c * hw * hw * k * k);
}
BENCHMARK(BM_Conv2d)->Args({8, 112, 3})->Args({32, 28, 3})->Args({64, 14, 3})->Args({16, 56, 7});
