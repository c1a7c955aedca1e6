#include <benchmark/benchmark.h>

#include "rafa/augment.hpp"
#include "rafa/model.hpp"
#include "rafa/ops.hpp"

namespace {

using namespace rafa;

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Image random_image(int side, Rng& rng) {
  Image img(side, side);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto cout = static_cast<std::size_t>(state.range(2));
  Rng rng(1);
  Tensor x = random_tensor({side, side, cin}, rng, true);
  Tensor w = random_tensor({3, 3, cin, cout}, rng, true);
  Tensor b = random_tensor({cout}, rng, true);
  for (auto _ : state) {
    Tensor y = conv2d(x, w, b, 2, 1);
    sum(y).backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({64, 3, 8})->Args({32, 8, 16})->Args({16, 16, 32});

void BM_RegionAttention(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  AttentionParams params = AttentionParams::init(c, rng);
  RegionSequence regions(random_tensor({9, c}, rng), 3);
  for (auto _ : state) {
    AttentionResult r = region_attention(regions, params);
    benchmark::DoNotOptimize(r.weights.data().data());
  }
}
BENCHMARK(BM_RegionAttention)->Arg(16)->Arg(32)->Arg(64);

void BM_HeadTrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.variant = static_cast<Variant>(state.range(0));
  cfg.backbone.kind = BackboneKind::file_features;
  cfg.backbone.input_h = cfg.backbone.input_w = 8;
  RafaModel model = RafaModel::create(cfg, 3);
  Rng rng(3);
  FeatureGrid grid(random_tensor({8, 8, cfg.channels()}, rng));
  for (auto _ : state) {
    ForwardResult r = model.forward_grid(grid, true, &rng);
    cross_entropy(r.prediction.probs, 1).backward();
    for (auto& p : model.parameters()) p.tensor.zero_grad();
  }
  state.SetLabel(to_string(cfg.variant));
}
BENCHMARK(BM_HeadTrainStep)->DenseRange(0, 3);

void BM_ModelTrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.variant = static_cast<Variant>(state.range(0));
  RafaModel model = RafaModel::create(cfg, 4);
  Rng rng(4);
  const Image img = random_image(64, rng);
  for (auto _ : state) {
    ForwardResult r = model.forward(img, true, &rng);
    cross_entropy(r.prediction.probs, 2).backward();
    for (auto& p : model.parameters()) p.tensor.zero_grad();
  }
  state.SetLabel(to_string(cfg.variant));
}
BENCHMARK(BM_ModelTrainStep)->DenseRange(0, 3);

void BM_AugmentPipeline(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  EraseConfig cfg;
  cfg.crop_h = cfg.crop_w = side;
  Rng rng(5);
  const Image img = random_image(side, rng);
  for (auto _ : state) {
    Image out = augment_pipeline(img, cfg, rng, true);
    benchmark::DoNotOptimize(out.pixels.data());
  }
}
BENCHMARK(BM_AugmentPipeline)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
