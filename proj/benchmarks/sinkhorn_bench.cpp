#include <benchmark/benchmark.h>

#include "dssl/rng.hpp"
#include "dssl/ssl.hpp"

namespace {

using namespace dssl;

static void BM_Sinkhorn(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  Rng rng(2);
  nn::Tensor scores(nn::Shape{b, p});
  for (double& v : scores.data) v = rng.normal();

  for (auto _ : state) {
    nn::Tensor q = ssl::sinkhorn(scores, 0.05, 3);
    benchmark::DoNotOptimize(q.data.data());
  }
  state.SetItemsProcessed(state.iterations() * b * p);
}

BENCHMARK(BM_Sinkhorn)->Args({256, 256})->Args({256, 3000})
    ->Unit(benchmark::kMicrosecond);

}  // namespace
