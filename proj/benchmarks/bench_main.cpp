#include <benchmark/benchmark.h>

#include <random>

#include "stereoae/baseline.hpp"
#include "stereoae/encoder.hpp"
#include "stereoae/geometry.hpp"
#include "stereoae/ops.hpp"

using namespace stereoae;

namespace {

template <typename T>
Tensor<T> noise(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& st) {
  const int c = static_cast<int>(st.range(0));
  auto x = noise<float>({c, 32, 96}, 1).set_requires_grad(true);
  auto w = noise<float>({c, c, 3, 3}, 2).set_requires_grad(true);
  auto b = noise<float>({c}, 3).set_requires_grad(true);
  ops::Conv2dParams pad1;
  pad1.pad = ops::Sides::uniform(1);
  for (auto _ : st) {
    Tape<float> t;
    auto y = ops::sum(t, ops::conv2d(t, x, w, b, pad1));
    t.backward(y);
    benchmark::DoNotOptimize(w.grad().data());
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_WarpLoss(benchmark::State& st) {
  const auto left = noise<double>({1, 64, 192}, 4), right = noise<double>({1, 64, 192}, 5);
  auto d = noise<double>({1, 64, 192}, 6).set_requires_grad(true);
  for (auto _ : st) {
    Tape<double> t;
    const auto l = geometry::total_loss(t, left, right, d);
    t.backward(l.total);
    d.zero_grad();
  }
}
BENCHMARK(BM_WarpLoss)->Unit(benchmark::kMicrosecond);

void BM_DeskForward(benchmark::State& st) {
  Network<float> net(NetworkConfig::make(Profile::desk), 1);
  for (int k = 0; k < st.range(0); ++k) net.grow_stage();
  const auto& cfg = net.config();
  const auto x = noise<float>({1, cfg.input_height, cfg.input_width}, 7);
  for (auto _ : st) {
    Tape<float> t(TapeMode::inference);
    benchmark::DoNotOptimize(net.forward(t, x).data().data());
  }
}
BENCHMARK(BM_DeskForward)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_HornSchunck(benchmark::State& st) {
  const auto l = noise<double>({1, 64, 192}, 8), r = noise<double>({1, 64, 192}, 9);
  for (auto _ : st) benchmark::DoNotOptimize(baseline::hs_stereo(l, r).disparity.values().data());
}
BENCHMARK(BM_HornSchunck)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
