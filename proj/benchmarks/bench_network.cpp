#include <benchmark/benchmark.h>

#include "aberr/network.hpp"
#include "aberr/simulate.hpp"

namespace {

using namespace aberr;

nn::ModelSpec desk_spec(bool maps) {
  nn::ModelSpec s;
  s.input_size = 64;
  s.map_heads = maps;
  return s;
}

void BM_NetworkForward(benchmark::State& state) {
  const nn::Network net(desk_spec(state.range(0) != 0));
  const auto params = net.init_params(1);
  const Image img = crop(procedural_texture(128, 3), 0, 0, 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(params, img));
}
BENCHMARK(BM_NetworkForward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_NetworkBackward(benchmark::State& state) {
  const nn::Network net(desk_spec(state.range(0) != 0));
  const auto params = net.init_params(2);
  const Image img = crop(procedural_texture(128, 4), 0, 0, 64, 64);
  nn::Cache cache;
  const nn::Output out = net.forward(params, img, &cache);
  nn::OutputGrad g;
  g.coeffs.fill(1.0);
  g.wave_map.assign(out.wave_map.size(), 1.0);
  g.psf_map.assign(out.psf_map.size(), 1.0);
  std::vector<double> grad(params.size());
  for (auto _ : state) {
    net.backward(params, cache, g, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_NetworkBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
