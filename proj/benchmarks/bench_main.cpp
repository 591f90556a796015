#include <benchmark/benchmark.h>

#include <random>

#include "mininet/depthnet.hpp"
#include "mininet/geometry.hpp"
#include "mininet/ops.hpp"
#include "mininet/synthetic.hpp"
#include "mininet/trainer.hpp"

using namespace mininet;

namespace {

Tensor<float> random_tensor(Shape s, std::uint64_t seed) {
  Tensor<float> t(std::move(s));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1, 1);
  for (auto& v : t.mutable_data()) v = d(rng);
  return t;
}

// Args: channels, height, width, groups (0 means depthwise).
void BM_Conv3x3(benchmark::State& state) {
  const auto c = state.range(0), h = state.range(1), w = state.range(2);
  const int groups = state.range(3) == 0 ? static_cast<int>(c) : static_cast<int>(state.range(3));
  auto x = random_tensor({1, c, h, w}, 1);
  auto k = random_tensor({c, c / groups, 3, 3}, 2);
  auto b = random_tensor({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, b, {1, 1, groups}));
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(h * w * c * (c / groups) * 9),
                                              benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3x3)->Args({64, 48, 160, 1})->Args({128, 48, 160, 0})->Unit(benchmark::kMillisecond);

void BM_Pointwise(benchmark::State& state) {
  const auto c = state.range(0);
  auto x = random_tensor({1, c, 48, 160}, 1);
  auto k = random_tensor({2 * c, c, 1, 1}, 2);
  auto b = random_tensor({2 * c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, b, {1, 0, 1}));
}
BENCHMARK(BM_Pointwise)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DepthForward(benchmark::State& state) {
  DepthNetConfig cfg;
  cfg.variant = static_cast<Variant>(state.range(0));
  cfg.output_res = static_cast<OutputRes>(state.range(1));
  Rng rng(0);
  DepthNet<float> net(cfg, rng);
  auto x = random_tensor({1, 3, 192, 640}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetLabel(to_string(cfg.variant) + "-" + to_string(cfg.output_res) + " 640x192");
}
BENCHMARK(BM_DepthForward)
    ->Args({static_cast<int>(Variant::Original), static_cast<int>(OutputRes::F)})
    ->Args({static_cast<int>(Variant::Small), static_cast<int>(OutputRes::E)})
    ->Unit(benchmark::kMillisecond);

void BM_Warp(benchmark::State& state) {
  auto src = random_tensor({1, 3, 192, 640}, 5);
  Tensor<float> depth(Shape{1, 1, 192, 640}, 10.0f);
  Tensor<float> pose(Shape{1, 6});
  pose.mutable_data()[3] = 0.1f;
  const Intrinsics k{370.0, 370.0, 319.5, 95.5};
  for (auto _ : state) benchmark::DoNotOptimize(synthesize_view(src, depth, pose, k));
}
BENCHMARK(BM_Warp)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  SynthSceneConfig sc;
  sc.num_frames = 6;
  const auto seq = generate_synthetic_sequence(sc);
  std::vector<Triplet<float>> items;
  for (std::size_t c = 1; c <= static_cast<std::size_t>(state.range(0)); ++c) items.push_back(seq.triplet<float>(c));
  const auto batch = stack_triplets(items);
  DepthNetConfig dc;
  dc.variant = Variant::Small;
  dc.output_res = OutputRes::H;
  Rng rng(0);
  DepthNet<float> depth(dc, rng);
  PoseNetConfig pc;
  pc.width_multiplier = 0.25;
  PoseNet<float> pose(pc, rng);
  Trainer<float> trainer(depth, pose, TrainConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch, 1e-4));
  state.SetLabel("small-H 128x64, batch " + std::to_string(state.range(0)));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
