#include <benchmark/benchmark.h>

#include <random>

#include "hairgbuf/model.hpp"
#include "hairgbuf/nn_layers.hpp"
#include "hairgbuf/raster.hpp"
#include "hairgbuf/recon.hpp"
#include "hairgbuf/spatial.hpp"

using namespace hairgbuf;

namespace {

TensorImage random_image(int h, int w, int c, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  TensorImage img(h, w, c);
  for (float& v : img.data()) v = u(rng);
  return img;
}

Camera bench_camera(int size) {
  return Camera::look_at({0.0, 0.0, 4.0}, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, 40.0, size, size);
}

void BM_Conv2d3x3(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int ch = static_cast<int>(state.range(1));
  const TensorImage x = random_image(size, size, ch, 1);
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(-0.1f, 0.1f);
  std::vector<float> w(static_cast<std::size_t>(ch) * ch * 9), b(ch);
  for (float& v : w) v = u(rng);
  const ConvLayer layer(ch, ch, 3, 1, std::move(w), std::move(b));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, layer));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Conv2d3x3)->Args({32, 32})->Args({64, 32})->Args({32, 64})->Unit(benchmark::kMillisecond);

void BM_SpatialForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SpatialNet net = SpatialNet::from_weights(random_weights(3));
  const TensorImage x = random_image(size, size, 4, 4);
  for (auto _ : state) benchmark::DoNotOptimize(spatial_forward(net, x));
}
BENCHMARK(BM_SpatialForward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Rasterize(benchmark::State& state) {
  const int spp = static_cast<int>(state.range(0));
  const StrandScene scene = make_seeded_scene(SceneFamily::Mixed, 5, 12);
  const Camera cam = bench_camera(64);
  const JitterSequence jitter = JitterSequence::halton23();
  for (auto _ : state) benchmark::DoNotOptimize(rasterize(scene, cam, spp, jitter, 0));
}
BENCHMARK(BM_Rasterize)->Arg(1)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ReconstructPositions(benchmark::State& state) {
  const StrandScene scene = make_seeded_scene(SceneFamily::Helix, 6, 12);
  const Camera cam = bench_camera(64);
  GBuffer g = rasterize(scene, cam, 1, JitterSequence::halton23(), 0);
  const GBuffer reference = rasterize(scene, cam, 32, JitterSequence::none(), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(reconstruct_positions(g, reference.coverage, reference.tangent, cam));
  }
}
BENCHMARK(BM_ReconstructPositions)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
