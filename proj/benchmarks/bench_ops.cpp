#include <benchmark/benchmark.h>

#include <random>

#include "panet/harness/train.hpp"
#include "panet/heads.hpp"
#include "panet/ops.hpp"
#include "panet/roi_pooling.hpp"

using namespace panet;

namespace {

Tensor random(std::mt19937_64& rng, Shape shape, bool grad = false) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  Tensor x = random(rng, {2, c, 16, 16});
  Tensor w = random(rng, {c, c, 3, 3});
  Tensor b = random(rng, {c});
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  Tensor x = random(rng, {2, c, 16, 16}, true);
  Tensor w = random(rng, {c, c, 3, 3}, true);
  Tensor b = random(rng, {c}, true);
  for (auto _ : state) sum(conv2d(x, w, b, 1, 1)).backward();
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32);

void BM_RoIAlign(benchmark::State& state) {
  std::mt19937_64 rng(3);
  Tensor map = random(rng, {2, 32, 16, 16});
  std::uniform_real_distribution<double> pos(0, 40), side(8, 24);
  std::vector<RoI> rois(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < rois.size(); ++i) {
    rois[i].x0 = pos(rng);
    rois[i].y0 = pos(rng);
    rois[i].x1 = rois[i].x0 + side(rng);
    rois[i].y1 = rois[i].y0 + side(rng);
    rois[i].image = i % 2;
  }
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(roi_align_batch(map, rois, {7, 2}, 4));
}
BENCHMARK(BM_RoIAlign)->Arg(32)->Arg(128);

void BM_BoxHead(benchmark::State& state) {
  std::mt19937_64 rng(4);
  ParameterRegistry reg(4);
  BoxHeadConfig cfg;
  cfg.variant = state.range(0) ? BoxVariant::kHeavier : BoxVariant::kTwoFc;
  BoxHead head(reg, cfg);
  std::vector<Tensor> grids;
  for (int l = 0; l < 4; ++l) grids.push_back(random(rng, {32, 32, 7, 7}));
  NormContext ctx;
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(head.forward(grids, ctx).class_logits);
}
BENCHMARK(BM_BoxHead)->Arg(0)->Arg(1);

void BM_MaskHead(benchmark::State& state) {
  std::mt19937_64 rng(5);
  ParameterRegistry reg(5);
  MaskHead head(reg, MaskHeadConfig{});
  std::vector<Tensor> grids;
  for (int l = 0; l < 4; ++l) grids.push_back(random(rng, {8, 32, 14, 14}));
  NormContext ctx;
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(head.forward(grids, ctx).fused_logits);
}
BENCHMARK(BM_MaskHead);

void BM_TrainStep(benchmark::State& state) {
  harness::TrainConfig cfg;
  cfg.train_scenes = 16;
  harness::Trainer trainer(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().total);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond)->Iterations(5);

}  // namespace

BENCHMARK_MAIN();
