#include <benchmark/benchmark.h>

#include <random>

#include "aberr/grad.hpp"
#include "aberr/restore.hpp"
#include "aberr/simulate.hpp"

namespace {

using namespace aberr;

ZernikeVector coeffs(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  ZernikeVector a;
  for (int j = kFirstNoll; j <= kLastNoll; ++j) a.at_noll(j) = u(rng);
  return a;
}

void BM_PsfFromCoeffs(benchmark::State& state) {
  const ZernikeBasis basis(PupilGrid(static_cast<std::size_t>(state.range(0)), 0.5));
  const ZernikeVector a = coeffs(1);
  for (auto _ : state) benchmark::DoNotOptimize(psf_from_coeffs(a, basis, PsfGeometry{2, 64}));
}
BENCHMARK(BM_PsfFromCoeffs)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_PsfLossAndGrad(benchmark::State& state) {
  const ZernikeBasis basis(PupilGrid(static_cast<std::size_t>(state.range(0)), 0.5));
  const PsfGeometry geom{2, 0};
  const PsfMap target = psf_from_coeffs(coeffs(2), basis, geom);
  const ZernikeVector a = coeffs(3);
  for (auto _ : state) benchmark::DoNotOptimize(psf_loss_and_grad(a, target, basis, geom));
}
BENCHMARK(BM_PsfLossAndGrad)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_BlurReplicate(benchmark::State& state) {
  const ZernikeBasis basis(PupilGrid(128, 0.5));
  const PsfMap psf = psf_from_coeffs(coeffs(4), basis, PsfGeometry{2, 64});
  const Image img = crop(procedural_texture(128, 1), 0, 0, 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(blur_image(img, psf, Boundary::replicate));
}
BENCHMARK(BM_BlurReplicate)->Unit(benchmark::kMicrosecond);

void BM_WienerReplicate(benchmark::State& state) {
  const ZernikeBasis basis(PupilGrid(128, 0.5));
  const PsfMap psf = psf_from_coeffs(coeffs(5), basis, PsfGeometry{2, 64});
  const Image img = crop(procedural_texture(128, 2), 0, 0, 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(wiener_deconvolve(img, psf, WienerConfig{1e-4, Boundary::replicate}));
}
BENCHMARK(BM_WienerReplicate)->Unit(benchmark::kMicrosecond);

}  // namespace
