#include <benchmark/benchmark.h>

#include "dssl/geometry.hpp"
#include "dssl/rng.hpp"

namespace {

using namespace dssl;

static void BM_RenderNovelView(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int planes = static_cast<int>(state.range(1));
  Rng rng(1);
  Image rgb(3, size, size);
  for (float& v : rgb.data) v = static_cast<float>(rng.uniform());
  DepthMap depth(size, size);
  for (float& v : depth.values) v = static_cast<float>(rng.uniform());
  geometry::RenderConfig cfg;
  cfg.num_planes = planes;

  for (auto _ : state) {
    auto out = geometry::render_novel_view(rgb, depth, {0.3, 0.1, 0.0}, cfg);
    benchmark::DoNotOptimize(out.color.data.data());
  }
  state.SetItemsProcessed(state.iterations() * size * size * planes);
}

BENCHMARK(BM_RenderNovelView)
    ->Args({64, 16})
    ->Args({64, 32})
    ->Args({128, 32})
    ->Args({160, 64})
    ->Unit(benchmark::kMillisecond);

}  // namespace
