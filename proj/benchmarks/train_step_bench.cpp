#include <benchmark/benchmark.h>

#include "dssl/rng.hpp"
#include "dssl/ssl.hpp"

namespace {

using namespace dssl;

static void BM_ByolTrainStep(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  ssl::EncoderSpec spec;
  spec.backbone = ssl::BackboneKind::tiny_conv;
  spec.in_channels = 3;
  spec.feature_dim = 128;
  ssl::ByolConfig byol;
  byol.proj_hidden = 512;
  byol.proj_out = 64;
  byol.pred_hidden = 512;
  ssl::OptimConfig optim;
  optim.lr = 0.05;
  optim.epochs = 1;
  optim.batch_size = batch;
  ssl::TrainState s = ssl::TrainState::init(spec, byol, optim);

  Rng rng(4);
  ssl::Batch b;
  b.view_a = nn::Tensor(nn::Shape{batch, 3, 32, 32});
  b.view_b = nn::Tensor(nn::Shape{batch, 3, 32, 32});
  for (double& v : b.view_a.data) v = rng.uniform();
  for (double& v : b.view_b.data) v = rng.uniform();

  for (auto _ : state) {
    const ssl::StepMetrics m = ssl::train_step(s, b, 0.05);
    benchmark::DoNotOptimize(m.loss);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}

BENCHMARK(BM_ByolTrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
